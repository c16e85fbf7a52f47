#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tforge/dataset.hpp"
#include "tforge/errors.hpp"
#include "tforge/eval.hpp"
#include "tforge/glyphs.hpp"
#include "tforge/hangul.hpp"
#include "tforge/models.hpp"
#include "tforge/nn/graph.hpp"
#include "tforge/nn/optim.hpp"
#include "tforge/rng.hpp"

namespace tforge::train {

using nlohmann::json;

// Flat key/value experiment description; every field appears in the config
// file and can be overridden on the command line. All seeds are explicit.
struct ExperimentConfig {
  std::uint64_t pool_seed = 1;
  std::uint64_t sample_seed = 2;
  std::uint64_t init_seed = 3;
  std::uint64_t shuffle_seed = 4;
  int canvas_h = 32;
  int canvas_w = 800;
  std::uint64_t train_count = 89370;
  std::uint64_t test_count = 22350;
  int len_min = 1;
  int len_max = 10;
  std::string arch = "SCN";
  int base_channels = 8;
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double pool_ratio = 0.8;
  double pool_fraction = 1.0;
  int snapshot_every = 10;
  int checkpoint_every = 10;
  std::string atlas_path;  // empty = built-in synthetic atlas
  std::uint64_t atlas_seed = 1;
  int hangul_cell = 24;
  int latin_cell_h = 12;
  int latin_cell_w = 5;
  std::string table_path;  // empty = built-in table
  std::string train_dataset;
  std::string test_dataset;
  std::string checkpoint_path;
  std::string out_dir = "out";
  int worst_k = 8;

  json to_json() const {
    return json{{"pool_seed", pool_seed},
                {"sample_seed", sample_seed},
                {"init_seed", init_seed},
                {"shuffle_seed", shuffle_seed},
                {"canvas_h", canvas_h},
                {"canvas_w", canvas_w},
                {"train_count", train_count},
                {"test_count", test_count},
                {"len_min", len_min},
                {"len_max", len_max},
                {"arch", arch},
                {"base_channels", base_channels},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"pool_ratio", pool_ratio},
                {"pool_fraction", pool_fraction},
                {"snapshot_every", snapshot_every},
                {"checkpoint_every", checkpoint_every},
                {"atlas_path", atlas_path},
                {"atlas_seed", atlas_seed},
                {"hangul_cell", hangul_cell},
                {"latin_cell_h", latin_cell_h},
                {"latin_cell_w", latin_cell_w},
                {"table_path", table_path},
                {"train_dataset", train_dataset},
                {"test_dataset", test_dataset},
                {"checkpoint_path", checkpoint_path},
                {"out_dir", out_dir},
                {"worst_k", worst_k}};
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    json known = c.to_json();
    for (const auto& [key, value] : j.items())
      if (!known.contains(key)) throw FormatError("unknown config key '" + key + "'");
    try {
      auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("pool_seed", c.pool_seed);
      get("sample_seed", c.sample_seed);
      get("init_seed", c.init_seed);
      get("shuffle_seed", c.shuffle_seed);
      get("canvas_h", c.canvas_h);
      get("canvas_w", c.canvas_w);
      get("train_count", c.train_count);
      get("test_count", c.test_count);
      get("len_min", c.len_min);
      get("len_max", c.len_max);
      get("arch", c.arch);
      get("base_channels", c.base_channels);
      get("epochs", c.epochs);
      get("batch_size", c.batch_size);
      get("learning_rate", c.learning_rate);
      get("pool_ratio", c.pool_ratio);
      get("pool_fraction", c.pool_fraction);
      get("snapshot_every", c.snapshot_every);
      get("checkpoint_every", c.checkpoint_every);
      get("atlas_path", c.atlas_path);
      get("atlas_seed", c.atlas_seed);
      get("hangul_cell", c.hangul_cell);
      get("latin_cell_h", c.latin_cell_h);
      get("latin_cell_w", c.latin_cell_w);
      get("table_path", c.table_path);
      get("train_dataset", c.train_dataset);
      get("test_dataset", c.test_dataset);
      get("checkpoint_path", c.checkpoint_path);
      get("out_dir", c.out_dir);
      get("worst_k", c.worst_k);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (batch_size < 1) throw FormatError("batch_size must be >= 1");
    if (epochs < 1) throw FormatError("epochs must be >= 1");
    if (len_min < 1 || len_max < len_min) throw FormatError("bad length range");
    if (canvas_h < 1 || canvas_w < 1) throw FormatError("bad canvas dims");
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    auto is = io::open_input(path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw FormatError("config must be a flat JSON object: " + path.string());
    return from_json(j);
  }
};

// The codepoints every dataset needs: all syllables plus the Latin targets.
inline std::vector<char32_t> syllable_codepoints() {
  std::vector<char32_t> cps(hangul::kSyllableCount);
  for (int i = 0; i < hangul::kSyllableCount; ++i)
    cps[static_cast<std::size_t>(i)] = hangul::kSyllableBase + static_cast<char32_t>(i);
  return cps;
}

inline std::vector<char32_t> latin_codepoints() {
  std::vector<char32_t> cps;
  for (char32_t c = U'a'; c <= U'z'; ++c) cps.push_back(c);
  cps.push_back(U'-');
  return cps;
}

// Built-in atlas: syllable glyphs on one cell size, Latin glyphs on a small
// cell so worst-case romanizations still fit the canvas.
inline glyphs::GlyphAtlas build_default_atlas(std::uint64_t seed, int hangul_cell = 24,
                                              int latin_cell_h = 12, int latin_cell_w = 5) {
  auto syllables = syllable_codepoints();
  auto latin = latin_codepoints();
  glyphs::GlyphAtlas parts[2] = {
      glyphs::build_synthetic_atlas(syllables, hangul_cell, hangul_cell, seed),
      glyphs::build_synthetic_atlas(latin, latin_cell_h, latin_cell_w,
                                    rng::derive(seed, 0x6C61))};
  return glyphs::merge_atlases("builtin-s" + std::to_string(seed), parts);
}

inline glyphs::GlyphAtlas load_or_build_atlas(const ExperimentConfig& cfg) {
  if (!cfg.atlas_path.empty()) return glyphs::load_atlas(cfg.atlas_path);
  return build_default_atlas(cfg.atlas_seed, cfg.hangul_cell, cfg.latin_cell_h,
                             cfg.latin_cell_w);
}

inline hangul::RomanizationTable load_or_default_table(const ExperimentConfig& cfg) {
  if (!cfg.table_path.empty()) return hangul::load_table(cfg.table_path);
  return hangul::default_table();
}

struct GeneratedData {
  data::PackedDataset train;
  data::PackedDataset test;
  data::PoolSplit split;
};

// Pool split, optional restriction, sequence sampling and rendering for both
// sides, entirely determined by the config seeds.
inline GeneratedData generate_datasets(const ExperimentConfig& cfg,
                                       const glyphs::GlyphAtlas& atlas,
                                       const hangul::RomanizationTable& table) {
  GeneratedData out;
  out.split = data::split_pool(cfg.pool_ratio, cfg.pool_seed);
  if (cfg.pool_fraction < 1.0)
    out.split = data::restrict_pool(out.split, cfg.pool_fraction,
                                    rng::derive(cfg.pool_seed, 0xF7AC));

  auto train_seqs = data::sample_sequences(out.split.train_chars, cfg.train_count,
                                           cfg.sample_seed, cfg.len_min, cfg.len_max);
  auto test_seqs = data::sample_sequences(out.split.test_chars, cfg.test_count,
                                          rng::derive(cfg.sample_seed, 0x7E57),
                                          cfg.len_min, cfg.len_max);

  data::DatasetManifest base;
  base.pool_seed = cfg.pool_seed;
  base.sample_seed = cfg.sample_seed;
  base.pool_ratio = cfg.pool_ratio;
  base.pool_fraction = cfg.pool_fraction;
  base.len_min = cfg.len_min;
  base.len_max = cfg.len_max;
  base.canvas_h = cfg.canvas_h;
  base.canvas_w = cfg.canvas_w;
  base.hangul_atlas_id = atlas.name;
  base.latin_atlas_id = atlas.name;
  base.table_id = cfg.table_path.empty() ? "builtin" : cfg.table_path;

  out.train = data::PackedDataset::generate(train_seqs, atlas, atlas, table, base);
  data::DatasetManifest test_base = base;
  test_base.sample_seed = rng::derive(cfg.sample_seed, 0x7E57);
  out.test = data::PackedDataset::generate(test_seqs, atlas, atlas, table, test_base);
  return out;
}

struct EvalSummary {
  double mean_f = 0.0;
  double mean_hamming = 0.0;
  double mean_sed = 0.0;
  std::size_t count = 0;
};

// Runs the model over a pair source and scores every pair.
inline std::vector<eval::PairEval> evaluate_model(models::Model<float>& model,
                                                  const data::PairSource& source,
                                                  const glyphs::GlyphAtlas& latin_atlas,
                                                  int batch_size = 128,
                                                  double pool_fraction = 1.0) {
  std::vector<eval::PairEval> evals(source.size());
  const std::size_t total = source.size();
  for (std::size_t base = 0; base < total; base += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(base + static_cast<std::size_t>(batch_size), total);
    std::vector<data::SamplePair> pairs(end - base);
    threading::parallel_for(end - base, [&](std::size_t k) {
      pairs[k] = source.pair(base + k);
    });
    std::vector<image::Image> inputs;
    inputs.reserve(pairs.size());
    for (auto& p : pairs) inputs.push_back(p.input);
    auto outputs = model.infer_images(inputs);
    threading::parallel_for(pairs.size(), [&](std::size_t k) {
      eval::PairEval ev = eval::evaluate_pair(outputs[k], pairs[k].target,
                                              pairs[k].latin_text, latin_atlas);
      ev.length = pairs[k].length;
      ev.pool_fraction = pool_fraction;
      evals[base + k] = ev;
    });
  }
  return evals;
}

inline EvalSummary summarize(std::span<const eval::PairEval> evals) {
  EvalSummary s;
  s.count = evals.size();
  for (const auto& e : evals) {
    s.mean_f += e.pixels.f_measure;
    s.mean_hamming += static_cast<double>(e.pixels.hamming);
    s.mean_sed += static_cast<double>(e.sed_value);
  }
  if (s.count) {
    s.mean_f /= static_cast<double>(s.count);
    s.mean_hamming /= static_cast<double>(s.count);
    s.mean_sed /= static_cast<double>(s.count);
  }
  return s;
}

struct EpochRecord {
  int epoch = 0;  // 1-based, cumulative across resumes
  double mean_loss = 0.0;
  double seconds = 0.0;
  std::optional<EvalSummary> snapshot;

  json to_json() const {
    json j{{"epoch", epoch}, {"mean_loss", mean_loss}, {"seconds", seconds}};
    if (snapshot)
      j["snapshot"] = json{{"f_measure", snapshot->mean_f},
                           {"hamming", snapshot->mean_hamming},
                           {"sed", snapshot->mean_sed},
                           {"count", snapshot->count}};
    return j;
  }
};

using TrainingLog = std::vector<EpochRecord>;

struct TrainOptions {
  int epochs = 1;              // total target epoch count
  int start_epoch = 0;         // epochs already completed (resume)
  int batch_size = 128;
  std::uint64_t shuffle_seed = 4;
  int snapshot_every = 10;     // 0 disables snapshots
  int checkpoint_every = 10;   // 0 disables periodic checkpoints
  bool check_finite = true;
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int /*completed epochs*/)> on_checkpoint;
};

// Seeded-shuffle minibatch training with BCE + Adam. The shuffle for epoch e
// depends only on (shuffle_seed, e), which is what makes resumed runs land
// on the identical weight trajectory.
inline TrainingLog train_model(models::Model<float>& model, nn::Adam<float>& adam,
                               const data::PairSource& train_data,
                               const data::PairSource* test_data,
                               const glyphs::GlyphAtlas* latin_atlas,
                               const TrainOptions& opt) {
  if (train_data.size() == 0) throw ShapeMismatch("empty training dataset");
  {
    // surface shape problems before the first batch
    const auto& m = train_data.manifest();
    if (m.canvas_h != model.spec().input_h || m.canvas_w != model.spec().input_w)
      throw ShapeMismatch("dataset canvas " + std::to_string(m.canvas_h) + "x" +
                          std::to_string(m.canvas_w) + " does not match model input " +
                          std::to_string(model.spec().input_h) + "x" +
                          std::to_string(model.spec().input_w));
  }

  TrainingLog log;
  const std::size_t total = train_data.size();
  const int h = model.spec().input_h, w = model.spec().input_w;
  std::vector<std::size_t> order(total);

  for (int epoch = opt.start_epoch; epoch < opt.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    auto g = rng::engine(rng::derive(opt.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng::shuffle(order, g);

    double loss_sum = 0.0;
    for (std::size_t base = 0; base < total; base += static_cast<std::size_t>(opt.batch_size)) {
      std::size_t end = std::min(base + static_cast<std::size_t>(opt.batch_size), total);
      int bn = static_cast<int>(end - base);
      nn::Tensor<float> input(bn, 1, h, w), target(bn, 1, h, w);
      threading::parallel_for(static_cast<std::size_t>(bn), [&](std::size_t k) {
        data::SamplePair p = train_data.pair(order[base + k]);
        std::copy(p.input.pixels.begin(), p.input.pixels.end(),
                  input.sample(static_cast<int>(k)));
        std::copy(p.target.pixels.begin(), p.target.pixels.end(),
                  target.sample(static_cast<int>(k)));
      });

      model.zero_grads();
      nn::Graph<float> graph(true);
      graph.set_check_finite(opt.check_finite);
      auto in = graph.external(&input);
      auto out = model.forward(graph, in);
      auto loss = graph.bce_loss(out, graph.external(&target));
      graph.backward(loss);
      auto params = model.parameters();
      adam.step(params);
      loss_sum += static_cast<double>(graph.value(loss).v[0]) * bn;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = loss_sum / static_cast<double>(total);
    bool last = epoch + 1 == opt.epochs;
    if (test_data && latin_atlas && opt.snapshot_every > 0 &&
        ((epoch + 1) % opt.snapshot_every == 0 || last)) {
      auto evals = evaluate_model(model, *test_data, *latin_atlas, opt.batch_size);
      rec.snapshot = summarize(evals);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.on_epoch) opt.on_epoch(rec);
    log.push_back(std::move(rec));

    if (opt.on_checkpoint && opt.checkpoint_every > 0 &&
        ((epoch + 1) % opt.checkpoint_every == 0 || last))
      opt.on_checkpoint(epoch + 1);
  }
  return log;
}

}  // namespace tforge::train
