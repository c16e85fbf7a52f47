#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tforge/errors.hpp"
#include "tforge/image.hpp"
#include "tforge/io.hpp"
#include "tforge/nn/graph.hpp"
#include "tforge/nn/optim.hpp"
#include "tforge/rng.hpp"
#include "tforge/tensor.hpp"

namespace tforge::models {

using nlohmann::json;

enum class Arch { SCN, SCN_SKIP, UNET, MLP };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::SCN: return "SCN";
    case Arch::SCN_SKIP: return "SCN_SKIP";
    case Arch::UNET: return "UNET";
    case Arch::MLP: return "MLP";
  }
  throw FormatError("unknown architecture enum value");
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "SCN") return Arch::SCN;
  if (s == "SCN_SKIP") return Arch::SCN_SKIP;
  if (s == "UNET") return Arch::UNET;
  if (s == "MLP") return Arch::MLP;
  throw FormatError("unknown architecture tag '" + s + "'");
}

// One entry of the layer program. Conv3/Conv1/Dense carry parameters; the
// rest are structural.
struct LayerDesc {
  enum class Kind { Conv3, Conv1, Dense, Relu, Sigmoid, Pool2, Up2, Reshape, SkipSave, SkipConcat };

  Kind kind = Kind::Relu;
  int in = 0, out = 0;        // channels/units for parameterized layers
  int c = 0, h = 0, w = 0;    // target shape for Reshape

  bool operator==(const LayerDesc&) const = default;

  static LayerDesc conv3(int in, int out) { return with_io(Kind::Conv3, in, out); }
  static LayerDesc conv1(int in, int out) { return with_io(Kind::Conv1, in, out); }
  static LayerDesc dense(int in, int out) { return with_io(Kind::Dense, in, out); }
  static LayerDesc plain(Kind k) {
    LayerDesc d;
    d.kind = k;
    return d;
  }
  static LayerDesc reshape(int c, int h, int w) {
    LayerDesc d;
    d.kind = Kind::Reshape;
    d.c = c;
    d.h = h;
    d.w = w;
    return d;
  }
  static LayerDesc with_io(Kind k, int in, int out) {
    LayerDesc d;
    d.kind = k;
    d.in = in;
    d.out = out;
    return d;
  }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::Conv3: return "conv3";
      case Kind::Conv1: return "conv1";
      case Kind::Dense: return "dense";
      case Kind::Relu: return "relu";
      case Kind::Sigmoid: return "sigmoid";
      case Kind::Pool2: return "pool2";
      case Kind::Up2: return "up2";
      case Kind::Reshape: return "reshape";
      case Kind::SkipSave: return "skip_save";
      case Kind::SkipConcat: return "skip_concat";
    }
    throw FormatError("unknown layer kind");
  }

  static Kind kind_from_name(const std::string& s) {
    for (Kind k : {Kind::Conv3, Kind::Conv1, Kind::Dense, Kind::Relu, Kind::Sigmoid,
                   Kind::Pool2, Kind::Up2, Kind::Reshape, Kind::SkipSave, Kind::SkipConcat})
      if (s == kind_name(k)) return k;
    throw FormatError("unknown layer kind '" + s + "'");
  }

  json to_json() const {
    json j{{"kind", kind_name(kind)}};
    if (kind == Kind::Conv3 || kind == Kind::Conv1 || kind == Kind::Dense) {
      j["in"] = in;
      j["out"] = out;
    } else if (kind == Kind::Reshape) {
      j["c"] = c;
      j["h"] = h;
      j["w"] = w;
    }
    return j;
  }

  static LayerDesc from_json(const json& j) {
    LayerDesc d;
    d.kind = kind_from_name(j.at("kind").get<std::string>());
    if (d.kind == Kind::Conv3 || d.kind == Kind::Conv1 || d.kind == Kind::Dense) {
      d.in = j.at("in").get<int>();
      d.out = j.at("out").get<int>();
    } else if (d.kind == Kind::Reshape) {
      d.c = j.at("c").get<int>();
      d.h = j.at("h").get<int>();
      d.w = j.at("w").get<int>();
    }
    return d;
  }
};

struct NetworkSpec {
  Arch arch = Arch::SCN;
  int input_h = 32;
  int input_w = 800;
  int base_channels = 8;  // 8 gives the standard 8,8,16,16,32,32,64,64 schedule
  std::vector<LayerDesc> layers;

  bool operator==(const NetworkSpec&) const = default;

  // Builds the layer program for an architecture.
  static NetworkSpec make(Arch arch, int input_h, int input_w, int base_channels = 8) {
    if (base_channels < 1) throw ShapeMismatch("base_channels must be positive");
    NetworkSpec spec;
    spec.arch = arch;
    spec.input_h = input_h;
    spec.input_w = input_w;
    spec.base_channels = base_channels;
    using K = LayerDesc::Kind;

    if (arch == Arch::MLP) {
      if (input_h < 1 || input_w < 1) throw ShapeMismatch("bad input dims");
      int px = input_h * input_w;
      spec.layers.push_back(LayerDesc::dense(px, 256));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::dense(256, 256));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::dense(256, 256));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::dense(256, px));
      spec.layers.push_back(LayerDesc::plain(K::Sigmoid));
      spec.layers.push_back(LayerDesc::reshape(1, input_h, input_w));
      return spec;
    }

    if (input_h % 16 != 0 || input_w % 16 != 0)
      throw DimsNotDivisible("convolutional architectures need H and W divisible by 16, got " +
                             std::to_string(input_h) + "x" + std::to_string(input_w));

    const bool skips = arch == Arch::SCN_SKIP || arch == Arch::UNET;
    const int b = base_channels;
    const int ch[4] = {b, 2 * b, 4 * b, 8 * b};
    int in = 1;
    for (int blk = 0; blk < 4; ++blk) {
      spec.layers.push_back(LayerDesc::conv3(in, ch[blk]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::conv3(ch[blk], ch[blk]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      if (skips) spec.layers.push_back(LayerDesc::plain(K::SkipSave));
      spec.layers.push_back(LayerDesc::plain(K::Pool2));
      in = ch[blk];
    }

    const int fh = input_h / 16, fw = input_w / 16;
    if (arch == Arch::UNET) {
      spec.layers.push_back(LayerDesc::conv3(ch[3], ch[3]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::conv3(ch[3], ch[3]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
    } else {
      const int d = ch[3] * fh * fw;
      spec.layers.push_back(LayerDesc::dense(d, d));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::reshape(ch[3], fh, fw));
    }

    in = ch[3];
    for (int blk = 3; blk >= 0; --blk) {
      spec.layers.push_back(LayerDesc::plain(K::Up2));
      int conv_in = in;
      if (skips) {
        spec.layers.push_back(LayerDesc::plain(K::SkipConcat));
        conv_in += ch[blk];
      }
      spec.layers.push_back(LayerDesc::conv3(conv_in, ch[blk]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      spec.layers.push_back(LayerDesc::conv3(ch[blk], ch[blk]));
      spec.layers.push_back(LayerDesc::plain(K::Relu));
      in = ch[blk];
    }
    spec.layers.push_back(LayerDesc::conv1(ch[0], 1));
    spec.layers.push_back(LayerDesc::plain(K::Sigmoid));
    return spec;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerDesc::Kind::Conv3:
          total += static_cast<std::size_t>(l.out) * l.in * 9 + static_cast<std::size_t>(l.out);
          break;
        case LayerDesc::Kind::Conv1:
        case LayerDesc::Kind::Dense:
          total += static_cast<std::size_t>(l.out) * l.in + static_cast<std::size_t>(l.out);
          break;
        default:
          break;
      }
    }
    return total;
  }

  bool has_dense() const {
    return std::any_of(layers.begin(), layers.end(), [](const LayerDesc& l) {
      return l.kind == LayerDesc::Kind::Dense;
    });
  }

  // Columns of the output that can differ after changing input column x0.
  // Fully convolutional programs give a bounded window; a dense layer makes
  // the whole row reachable.
  std::pair<int, int> affected_columns(int x0) const {
    long lo = x0, hi = x0;
    long width = input_w;
    auto clamp = [&] {
      lo = std::max(0L, lo);
      hi = std::min(width - 1, hi);
    };
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerDesc::Kind::Conv3:
          lo -= 1;
          hi += 1;
          clamp();
          break;
        case LayerDesc::Kind::Pool2:
          lo = lo / 2;
          hi = hi / 2;
          width /= 2;
          break;
        case LayerDesc::Kind::Up2:
          lo = 2 * lo;
          hi = 2 * hi + 1;
          width *= 2;
          break;
        case LayerDesc::Kind::Dense:
        case LayerDesc::Kind::Reshape:
          return {0, input_w - 1};
        default:
          break;
      }
    }
    clamp();
    return {static_cast<int>(lo), static_cast<int>(hi)};
  }

  json to_json() const {
    json jl = json::array();
    for (const auto& l : layers) jl.push_back(l.to_json());
    return json{{"arch", to_string(arch)},
                {"input_h", input_h},
                {"input_w", input_w},
                {"base_channels", base_channels},
                {"layers", jl}};
  }

  static NetworkSpec from_json(const json& j) {
    NetworkSpec spec;
    try {
      spec.arch = arch_from_string(j.at("arch").get<std::string>());
      spec.input_h = j.at("input_h").get<int>();
      spec.input_w = j.at("input_w").get<int>();
      spec.base_channels = j.at("base_channels").get<int>();
      for (const auto& l : j.at("layers")) spec.layers.push_back(LayerDesc::from_json(l));
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad network spec: ") + e.what());
    }
    NetworkSpec rebuilt = make(spec.arch, spec.input_h, spec.input_w, spec.base_channels);
    if (rebuilt.layers != spec.layers)
      throw FormatError("network spec layers are inconsistent with its architecture tag");
    return spec;
  }
};

inline NetworkSpec build_scn(int h, int w, int base = 8) {
  return NetworkSpec::make(Arch::SCN, h, w, base);
}
inline NetworkSpec build_scn_skip(int h, int w, int base = 8) {
  return NetworkSpec::make(Arch::SCN_SKIP, h, w, base);
}
inline NetworkSpec build_unet(int h, int w, int base = 8) {
  return NetworkSpec::make(Arch::UNET, h, w, base);
}
inline NetworkSpec build_mlp(int h, int w) { return NetworkSpec::make(Arch::MLP, h, w); }

// A spec instantiated with parameters. Forward interprets the layer program
// on a Graph so the same wiring serves training and inference.
template <typename T>
class Model {
 public:
  Model(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    auto g = rng::engine(init_seed);
    int index = 0;
    for (const auto& l : spec_.layers) {
      using K = LayerDesc::Kind;
      if (l.kind == K::Conv3) {
        alloc(l.out, l.in, 3, 3, "conv3_" + std::to_string(index), g);
        ++index;
      } else if (l.kind == K::Conv1) {
        alloc(l.out, l.in, 1, 1, "conv1_" + std::to_string(index), g);
        ++index;
      } else if (l.kind == K::Dense) {
        alloc(l.out, l.in, 1, 1, "dense_" + std::to_string(index), g);
        ++index;
      }
    }
  }

  const NetworkSpec& spec() const { return spec_; }

  std::vector<nn::Param<T>*> parameters() {
    std::vector<nn::Param<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  typename nn::Graph<T>::Id forward(nn::Graph<T>& g, typename nn::Graph<T>::Id x) {
    using K = LayerDesc::Kind;
    const auto& input = g.value(x);
    if (input.c != 1 || input.h != spec_.input_h || input.w != spec_.input_w)
      throw ShapeMismatch("model expects (n,1," + std::to_string(spec_.input_h) + "," +
                          std::to_string(spec_.input_w) + "), got (" + input.shape_string() +
                          ")");
    std::vector<typename nn::Graph<T>::Id> skips;
    std::size_t pi = 0;
    for (const auto& l : spec_.layers) {
      switch (l.kind) {
        case K::Conv3: {
          auto w = g.parameter(params_[pi].get());
          auto b = g.parameter(params_[pi + 1].get());
          pi += 2;
          x = g.conv3x3_same(x, w, b);
          break;
        }
        case K::Conv1: {
          auto w = g.parameter(params_[pi].get());
          auto b = g.parameter(params_[pi + 1].get());
          pi += 2;
          x = g.conv1x1(x, w, b);
          break;
        }
        case K::Dense: {
          auto w = g.parameter(params_[pi].get());
          auto b = g.parameter(params_[pi + 1].get());
          pi += 2;
          x = g.dense(x, w, b);
          break;
        }
        case K::Relu: x = g.relu(x); break;
        case K::Sigmoid: x = g.sigmoid(x); break;
        case K::Pool2: x = g.maxpool2x2(x); break;
        case K::Up2: x = g.upsample2x(x); break;
        case K::Reshape: x = g.reshape(x, l.c, l.h, l.w); break;
        case K::SkipSave: skips.push_back(x); break;
        case K::SkipConcat: {
          if (skips.empty()) throw ShapeMismatch("skip stack underflow");
          x = g.concat_channels(x, skips.back());
          skips.pop_back();
          break;
        }
      }
    }
    return x;
  }

  // Batched inference without recording; values stay in (0,1).
  nn::Tensor<T> infer(const nn::Tensor<T>& batch) {
    nn::Graph<T> g(false);
    auto in = g.external(&batch);
    auto out = forward(g, in);
    return g.value(out);
  }

  std::vector<image::Image> infer_images(std::span<const image::Image> inputs) {
    auto batch = nn::batch_from_images<T>(inputs);
    return nn::batch_to_images(infer(batch));
  }

  // Raw parameter access in descriptor order (checkpoints, tests).
  std::vector<std::unique_ptr<nn::Param<T>>>& raw_params() { return params_; }

 private:
  void alloc(int n, int c, int h, int w, const std::string& name, rng::Engine& g) {
    // Kaiming-uniform fan-in scaling; biases start at zero.
    nn::Tensor<T> weight(n, c, h, w);
    double fan_in = static_cast<double>(c) * h * w;
    double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : weight.v) v = static_cast<T>(rng::uniform(g, -bound, bound));
    params_.push_back(std::make_unique<nn::Param<T>>(name + ".w", std::move(weight)));
    params_.push_back(
        std::make_unique<nn::Param<T>>(name + ".b", nn::Tensor<T>(1, n, 1, 1)));
  }

  NetworkSpec spec_;
  std::vector<std::unique_ptr<nn::Param<T>>> params_;
};

// ---- checkpoints ----
// File: magic "SCNW", u16 version=1, u32 length + JSON header {spec, config},
// parameter blob (u64 count + f32s in descriptor order), optimizer blob
// (u8 present, u64 step count, then m and v f32 blobs), u64 epoch, RNG state
// blob (u64 length + bytes; holds the u64 training seed).
struct Checkpoint {
  NetworkSpec spec;
  json config = json::object();
  std::vector<float> parameters;
  bool has_optimizer = false;
  std::uint64_t adam_step = 0;
  std::vector<float> adam_m, adam_v;
  std::uint64_t epoch = 0;
  std::uint64_t train_seed = 0;

  static Checkpoint from_model(Model<float>& model, const nn::Adam<float>* adam,
                               std::uint64_t epoch, std::uint64_t train_seed,
                               json config = json::object()) {
    Checkpoint ck;
    ck.spec = model.spec();
    ck.config = std::move(config);
    ck.epoch = epoch;
    ck.train_seed = train_seed;
    for (auto& p : model.raw_params())
      ck.parameters.insert(ck.parameters.end(), p->value.v.begin(), p->value.v.end());
    if (adam) {
      ck.has_optimizer = true;
      ck.adam_step = adam->step_count();
      for (auto& p : model.raw_params()) {
        if (p->m.size() != p->value.size()) {
          ck.adam_m.insert(ck.adam_m.end(), p->value.size(), 0.0f);
          ck.adam_v.insert(ck.adam_v.end(), p->value.size(), 0.0f);
        } else {
          ck.adam_m.insert(ck.adam_m.end(), p->m.v.begin(), p->m.v.end());
          ck.adam_v.insert(ck.adam_v.end(), p->v.v.begin(), p->v.v.end());
        }
      }
    }
    return ck;
  }

  // Instantiates the model (and optionally restores Adam moments).
  Model<float> restore(nn::Adam<float>* adam = nullptr) const {
    Model<float> model(spec, 0);
    std::size_t off = 0;
    for (auto& p : model.raw_params()) {
      if (off + p->value.size() > parameters.size())
        throw FormatError("checkpoint parameter blob is too short");
      std::copy_n(parameters.begin() + static_cast<std::ptrdiff_t>(off), p->value.size(),
                  p->value.v.begin());
      off += p->value.size();
    }
    if (off != parameters.size())
      throw FormatError("checkpoint parameter blob size mismatch");
    if (adam) {
      adam->set_step_count(adam_step);
      if (has_optimizer) {
        std::size_t moff = 0;
        for (auto& p : model.raw_params()) {
          p->m = nn::Tensor<float>(p->value.n, p->value.c, p->value.h, p->value.w);
          p->v = nn::Tensor<float>(p->value.n, p->value.c, p->value.h, p->value.w);
          if (moff + p->value.size() > adam_m.size())
            throw FormatError("checkpoint optimizer blob is too short");
          std::copy_n(adam_m.begin() + static_cast<std::ptrdiff_t>(moff), p->value.size(),
                      p->m.v.begin());
          std::copy_n(adam_v.begin() + static_cast<std::ptrdiff_t>(moff), p->value.size(),
                      p->v.v.begin());
          moff += p->value.size();
        }
      }
    }
    return model;
  }
};

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  auto os = io::open_output(path);
  io::Writer w(os);
  w.str("SCNW");
  w.u16(1);
  json header{{"spec", ck.spec.to_json()}, {"config", ck.config}};
  std::string hs = header.dump();
  w.u32(static_cast<std::uint32_t>(hs.size()));
  w.str(hs);
  w.u64(ck.parameters.size());
  for (float v : ck.parameters) w.f32(v);
  w.u8(ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    w.u64(ck.adam_step);
    for (float v : ck.adam_m) w.f32(v);
    for (float v : ck.adam_v) w.f32(v);
  }
  w.u64(ck.epoch);
  w.u64(8);
  w.u64(ck.train_seed);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<Arch> expected_arch = std::nullopt) {
  auto is = io::open_input(path);
  io::Reader r(is);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string_view(magic, 4) != "SCNW")
    throw FormatError("bad magic in " + path.string() + " (expected SCNW)");
  if (r.u16("version") != 1) throw FormatError("unsupported SCNW version");
  std::uint32_t hlen = r.u32("header length");
  std::string hs = r.str(hlen, "header");
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded())
    throw FormatError("checkpoint header is not valid JSON in " + path.string());
  Checkpoint ck;
  ck.spec = NetworkSpec::from_json(header.at("spec"));
  if (header.contains("config")) ck.config = header.at("config");
  if (expected_arch && ck.spec.arch != *expected_arch)
    throw SpecMismatch("checkpoint holds a " + to_string(ck.spec.arch) +
                       " model, expected " + to_string(*expected_arch));
  std::uint64_t count = r.u64("parameter count");
  if (count != ck.spec.parameter_count())
    throw FormatError("checkpoint parameter count disagrees with its spec");
  ck.parameters.resize(count);
  for (auto& v : ck.parameters) v = r.f32("parameters");
  ck.has_optimizer = r.u8("optimizer flag") != 0;
  if (ck.has_optimizer) {
    ck.adam_step = r.u64("optimizer step");
    ck.adam_m.resize(count);
    for (auto& v : ck.adam_m) v = r.f32("optimizer m");
    ck.adam_v.resize(count);
    for (auto& v : ck.adam_v) v = r.f32("optimizer v");
  }
  ck.epoch = r.u64("epoch");
  std::uint64_t rng_len = r.u64("rng blob length");
  if (rng_len != 8) throw FormatError("unexpected RNG state blob length");
  ck.train_seed = r.u64("rng blob");
  return ck;
}

}  // namespace tforge::models
