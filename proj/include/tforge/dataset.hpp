#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tforge/errors.hpp"
#include "tforge/glyphs.hpp"
#include "tforge/hangul.hpp"
#include "tforge/image.hpp"
#include "tforge/io.hpp"
#include "tforge/rng.hpp"
#include "tforge/threading.hpp"
#include "tforge/utf8.hpp"

namespace tforge::data {

using nlohmann::json;

// Character-disjoint train/test syllable pools. Both sides kept sorted.
struct PoolSplit {
  std::vector<char32_t> train_chars;
  std::vector<char32_t> test_chars;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

inline PoolSplit split_pool(double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw IndexOutOfRange("split ratio must be in (0,1)");
  std::vector<char32_t> all(hangul::kSyllableCount);
  for (int i = 0; i < hangul::kSyllableCount; ++i)
    all[static_cast<std::size_t>(i)] = hangul::kSyllableBase + static_cast<char32_t>(i);
  auto g = rng::engine(seed);
  rng::shuffle(all, g);
  std::size_t n_train = static_cast<std::size_t>(ratio * hangul::kSyllableCount);
  PoolSplit split;
  split.seed = seed;
  split.ratio = ratio;
  split.train_chars.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_chars.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  std::sort(split.train_chars.begin(), split.train_chars.end());
  std::sort(split.test_chars.begin(), split.test_chars.end());
  return split;
}

// Shrinks the training pool to floor(fraction * |train|); test side unchanged.
inline PoolSplit restrict_pool(const PoolSplit& split, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw IndexOutOfRange("pool fraction must be in (0,1]");
  if (fraction == 1.0) return split;
  PoolSplit out = split;
  auto g = rng::engine(seed);
  rng::shuffle(out.train_chars, g);
  std::size_t keep = static_cast<std::size_t>(fraction * static_cast<double>(split.train_chars.size()));
  out.train_chars.resize(keep);
  std::sort(out.train_chars.begin(), out.train_chars.end());
  return out;
}

// count/n_lengths sequences of each length in [len_min, len_max]; syllables
// drawn uniformly with replacement from the pool.
inline std::vector<std::u32string> sample_sequences(std::span<const char32_t> pool,
                                                    std::size_t count, std::uint64_t seed,
                                                    int len_min = 1, int len_max = 10) {
  if (pool.empty()) throw IndexOutOfRange("character pool is empty");
  if (len_min < 1 || len_max < len_min) throw IndexOutOfRange("bad sequence length range");
  std::size_t n_lengths = static_cast<std::size_t>(len_max - len_min + 1);
  if (count % n_lengths != 0)
    throw CountNotDivisible("sequence count " + std::to_string(count) +
                            " is not divisible by the number of lengths " +
                            std::to_string(n_lengths));
  std::size_t per_length = count / n_lengths;
  std::vector<std::u32string> out;
  out.reserve(count);
  auto g = rng::engine(seed);
  for (int len = len_min; len <= len_max; ++len)
    for (std::size_t i = 0; i < per_length; ++i) {
      std::u32string s(static_cast<std::size_t>(len), U'\0');
      for (auto& ch : s) ch = pool[static_cast<std::size_t>(rng::below(g, pool.size()))];
      out.push_back(std::move(s));
    }
  return out;
}

struct SamplePair {
  std::string hangul_text;  // UTF-8
  std::string latin_text;
  image::Image input;
  image::Image target;
  int length = 0;

  bool operator==(const SamplePair&) const = default;
};

inline SamplePair make_pair(std::u32string_view seq, const glyphs::GlyphAtlas& hangul_atlas,
                            const glyphs::GlyphAtlas& latin_atlas,
                            const hangul::RomanizationTable& table, int canvas_h,
                            int canvas_w, int margin = 0) {
  SamplePair p;
  p.hangul_text = utf8::encode(seq);
  p.latin_text = hangul::romanize_sequence(seq, table);
  p.input = glyphs::render_text(hangul_atlas, seq, canvas_h, canvas_w, margin);
  auto latin_cps = utf8::decode(p.latin_text);
  p.target = glyphs::render_text(latin_atlas, latin_cps, canvas_h, canvas_w, margin);
  p.length = static_cast<int>(seq.size());
  return p;
}

inline std::vector<SamplePair> build_pairs(std::span<const std::u32string> sequences,
                                           const glyphs::GlyphAtlas& hangul_atlas,
                                           const glyphs::GlyphAtlas& latin_atlas,
                                           const hangul::RomanizationTable& table,
                                           int canvas_h, int canvas_w, int margin = 0) {
  std::vector<SamplePair> out(sequences.size());
  threading::parallel_for(sequences.size(), [&](std::size_t i) {
    out[i] = make_pair(sequences[i], hangul_atlas, latin_atlas, table, canvas_h, canvas_w,
                       margin);
  });
  return out;
}

struct DatasetManifest {
  std::uint64_t pool_seed = 0;
  std::uint64_t sample_seed = 0;
  double pool_ratio = 0.8;
  double pool_fraction = 1.0;
  int len_min = 1;
  int len_max = 10;
  std::map<int, std::uint64_t> counts_per_length;
  int canvas_h = 32;
  int canvas_w = 800;
  std::string hangul_atlas_id;
  std::string latin_atlas_id;
  std::string table_id;
  std::uint64_t pair_count = 0;
  std::vector<std::uint64_t> offsets;  // per pair, relative to the data section

  json to_json() const {
    json counts = json::object();
    for (const auto& [len, n] : counts_per_length) counts[std::to_string(len)] = n;
    return json{{"pool_seed", pool_seed},
                {"sample_seed", sample_seed},
                {"pool_ratio", pool_ratio},
                {"pool_fraction", pool_fraction},
                {"len_min", len_min},
                {"len_max", len_max},
                {"counts_per_length", counts},
                {"canvas_h", canvas_h},
                {"canvas_w", canvas_w},
                {"hangul_atlas_id", hangul_atlas_id},
                {"latin_atlas_id", latin_atlas_id},
                {"table_id", table_id},
                {"pair_count", pair_count},
                {"offsets", offsets}};
  }

  static DatasetManifest from_json(const json& j) {
    DatasetManifest m;
    try {
      m.pool_seed = j.at("pool_seed").get<std::uint64_t>();
      m.sample_seed = j.at("sample_seed").get<std::uint64_t>();
      m.pool_ratio = j.at("pool_ratio").get<double>();
      m.pool_fraction = j.at("pool_fraction").get<double>();
      m.len_min = j.at("len_min").get<int>();
      m.len_max = j.at("len_max").get<int>();
      for (const auto& [k, v] : j.at("counts_per_length").items())
        m.counts_per_length[std::stoi(k)] = v.get<std::uint64_t>();
      m.canvas_h = j.at("canvas_h").get<int>();
      m.canvas_w = j.at("canvas_w").get<int>();
      m.hangul_atlas_id = j.at("hangul_atlas_id").get<std::string>();
      m.latin_atlas_id = j.at("latin_atlas_id").get<std::string>();
      m.table_id = j.at("table_id").get<std::string>();
      m.pair_count = j.at("pair_count").get<std::uint64_t>();
      m.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad dataset manifest: ") + e.what());
    }
    return m;
  }
};

namespace detail {

inline std::size_t packed_image_bytes(int h, int w) {
  return (static_cast<std::size_t>(h) * w + 7) / 8;
}

// Record layout: u32 hangul byte length + bytes, u32 latin byte length +
// bytes, then two images, each u16 h, u16 w + packed bits.
inline std::uint64_t record_size(std::size_t hangul_bytes, std::size_t latin_bytes, int h,
                                 int w) {
  return 4 + hangul_bytes + 4 + latin_bytes + 2 * (4 + packed_image_bytes(h, w));
}

inline void write_image(io::Writer& w, const image::Image& img) {
  w.u16(static_cast<std::uint16_t>(img.height));
  w.u16(static_cast<std::uint16_t>(img.width));
  auto packed = io::pack_bits(std::span<const float>(img.pixels));
  w.bytes(packed.data(), packed.size());
}

inline image::Image read_image(io::Reader& r, const char* ctx) {
  int h = r.u16(ctx);
  int wpx = r.u16(ctx);
  if (h <= 0 || wpx <= 0) throw FormatError(std::string("bad image dims in ") + ctx);
  std::vector<std::uint8_t> packed(packed_image_bytes(h, wpx));
  r.bytes(packed.data(), packed.size(), ctx);
  image::Image img(h, wpx);
  io::unpack_bits(std::span<const std::uint8_t>(packed), img.size(), img.pixels.data());
  return img;
}

inline void write_record(io::Writer& w, const SamplePair& p) {
  w.u32(static_cast<std::uint32_t>(p.hangul_text.size()));
  w.str(p.hangul_text);
  w.u32(static_cast<std::uint32_t>(p.latin_text.size()));
  w.str(p.latin_text);
  write_image(w, p.input);
  write_image(w, p.target);
}

inline SamplePair read_record(io::Reader& r, const char* ctx) {
  SamplePair p;
  std::uint32_t hl = r.u32(ctx);
  if (hl > (1u << 20)) throw FormatError(std::string("unreasonable text length in ") + ctx);
  p.hangul_text = r.str(hl, ctx);
  std::uint32_t ll = r.u32(ctx);
  if (ll > (1u << 20)) throw FormatError(std::string("unreasonable text length in ") + ctx);
  p.latin_text = r.str(ll, ctx);
  p.input = read_image(r, ctx);
  p.target = read_image(r, ctx);
  p.length = static_cast<int>(utf8::decode(p.hangul_text).size());
  return p;
}

}  // namespace detail

// Dataset file: magic "IIDS", u16 version=1, u32 manifest length + manifest
// JSON (UTF-8), then pair records at the offsets listed in the manifest.
inline constexpr char kDatasetMagic[4] = {'I', 'I', 'D', 'S'};

inline void save_dataset(std::span<const SamplePair> pairs, DatasetManifest manifest,
                         const std::filesystem::path& path) {
  manifest.pair_count = pairs.size();
  manifest.offsets.resize(pairs.size());
  std::uint64_t off = 0;
  manifest.counts_per_length.clear();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    manifest.offsets[i] = off;
    off += detail::record_size(pairs[i].hangul_text.size(), pairs[i].latin_text.size(),
                               pairs[i].input.height, pairs[i].input.width);
    manifest.counts_per_length[pairs[i].length]++;
  }
  auto os = io::open_output(path);
  io::Writer w(os);
  w.bytes(kDatasetMagic, 4);
  w.u16(1);
  std::string mjson = manifest.to_json().dump();
  w.u32(static_cast<std::uint32_t>(mjson.size()));
  w.str(mjson);
  for (const auto& p : pairs) detail::write_record(w, p);
}

// Random access over a dataset file without loading every pair.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path)
      : path_(path), is_(io::open_input(path)) {
    io::Reader r(is_);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::string_view(magic, 4) != std::string_view(kDatasetMagic, 4))
      throw FormatError("bad magic in " + path.string() + " (expected IIDS)");
    if (r.u16("version") != 1) throw FormatError("unsupported IIDS version");
    std::uint32_t mlen = r.u32("manifest length");
    std::string mjson = r.str(mlen, "manifest");
    json j = json::parse(mjson, nullptr, false);
    if (j.is_discarded()) throw FormatError("manifest is not valid JSON in " + path.string());
    manifest_ = DatasetManifest::from_json(j);
    if (manifest_.offsets.size() != manifest_.pair_count)
      throw FormatError("manifest offsets disagree with pair_count in " + path.string());
    std::uint64_t counted = 0;
    for (const auto& [len, n] : manifest_.counts_per_length) counted += n;
    if (counted != manifest_.pair_count)
      throw FormatError("manifest length histogram disagrees with pair_count in " +
                        path.string());
    data_start_ = static_cast<std::uint64_t>(is_.tellg());
  }

  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.pair_count; }

  SamplePair pair(std::size_t i) const {
    if (i >= manifest_.pair_count)
      throw IndexOutOfRange("pair index " + std::to_string(i) + " out of range (" +
                            std::to_string(manifest_.pair_count) + " pairs)");
    std::lock_guard<std::mutex> lk(mu_);
    is_.clear();
    is_.seekg(static_cast<std::streamoff>(data_start_ + manifest_.offsets[i]));
    io::Reader r(is_);
    std::string ctx = "pair record " + std::to_string(i);
    return detail::read_record(r, ctx.c_str());
  }

 private:
  std::filesystem::path path_;
  mutable std::ifstream is_;
  mutable std::mutex mu_;
  DatasetManifest manifest_;
  std::uint64_t data_start_ = 0;
};

// Random-access source of sample pairs (in-memory store or file reader).
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::size_t size() const = 0;
  virtual SamplePair pair(std::size_t i) const = 0;
  virtual const DatasetManifest& manifest() const = 0;
};

// Compact in-memory dataset; images kept bit-packed.
class PackedDataset : public PairSource {
 public:
  PackedDataset() = default;

  static PackedDataset from_pairs(std::span<const SamplePair> pairs,
                                  DatasetManifest manifest) {
    PackedDataset d;
    d.manifest_ = std::move(manifest);
    d.manifest_.pair_count = pairs.size();
    d.manifest_.offsets.clear();
    d.manifest_.counts_per_length.clear();
    d.records_.reserve(pairs.size());
    for (const auto& p : pairs) {
      d.manifest_.counts_per_length[p.length]++;
      d.records_.push_back(Record{
          p.hangul_text, p.latin_text,
          io::pack_bits(std::span<const float>(p.input.pixels)),
          io::pack_bits(std::span<const float>(p.target.pixels)), p.length});
    }
    return d;
  }

  // Renders sequences in parallel chunks; peak memory stays bounded.
  static PackedDataset generate(std::span<const std::u32string> sequences,
                                const glyphs::GlyphAtlas& hangul_atlas,
                                const glyphs::GlyphAtlas& latin_atlas,
                                const hangul::RomanizationTable& table,
                                DatasetManifest manifest) {
    PackedDataset d;
    d.manifest_ = std::move(manifest);
    d.manifest_.pair_count = sequences.size();
    d.manifest_.offsets.clear();
    d.manifest_.counts_per_length.clear();
    d.records_.resize(sequences.size());
    const int ch = d.manifest_.canvas_h, cw = d.manifest_.canvas_w;
    constexpr std::size_t kChunk = 512;
    for (std::size_t base = 0; base < sequences.size(); base += kChunk) {
      std::size_t end = std::min(base + kChunk, sequences.size());
      threading::parallel_for(end - base, [&](std::size_t k) {
        std::size_t i = base + k;
        SamplePair p = make_pair(sequences[i], hangul_atlas, latin_atlas, table, ch, cw);
        d.records_[i] = Record{std::move(p.hangul_text), std::move(p.latin_text),
                               io::pack_bits(std::span<const float>(p.input.pixels)),
                               io::pack_bits(std::span<const float>(p.target.pixels)),
                               p.length};
      });
    }
    for (const auto& r : d.records_) d.manifest_.counts_per_length[r.length]++;
    return d;
  }

  static PackedDataset from_file(const std::filesystem::path& path) {
    DatasetReader reader(path);
    PackedDataset d;
    d.manifest_ = reader.manifest();
    d.records_.resize(reader.size());
    threading::parallel_for(reader.size(), [&](std::size_t i) {
      SamplePair p = reader.pair(i);
      d.records_[i] = Record{std::move(p.hangul_text), std::move(p.latin_text),
                             io::pack_bits(std::span<const float>(p.input.pixels)),
                             io::pack_bits(std::span<const float>(p.target.pixels)),
                             p.length};
    });
    return d;
  }

  std::size_t size() const override { return records_.size(); }
  const DatasetManifest& manifest() const override { return manifest_; }

  SamplePair pair(std::size_t i) const override {
    if (i >= records_.size())
      throw IndexOutOfRange("pair index " + std::to_string(i) + " out of range (" +
                            std::to_string(records_.size()) + " pairs)");
    const Record& r = records_[i];
    SamplePair p;
    p.hangul_text = r.hangul_text;
    p.latin_text = r.latin_text;
    p.length = r.length;
    p.input = image::Image(manifest_.canvas_h, manifest_.canvas_w);
    p.target = image::Image(manifest_.canvas_h, manifest_.canvas_w);
    io::unpack_bits(std::span<const std::uint8_t>(r.input_bits), p.input.size(),
                    p.input.pixels.data());
    io::unpack_bits(std::span<const std::uint8_t>(r.target_bits), p.target.size(),
                    p.target.pixels.data());
    return p;
  }

  void save(const std::filesystem::path& path) const {
    DatasetManifest m = manifest_;
    m.offsets.resize(records_.size());
    std::uint64_t off = 0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      m.offsets[i] = off;
      off += detail::record_size(records_[i].hangul_text.size(),
                                 records_[i].latin_text.size(), m.canvas_h, m.canvas_w);
    }
    auto os = io::open_output(path);
    io::Writer w(os);
    w.bytes(kDatasetMagic, 4);
    w.u16(1);
    std::string mjson = m.to_json().dump();
    w.u32(static_cast<std::uint32_t>(mjson.size()));
    w.str(mjson);
    for (const auto& rec : records_) {
      w.u32(static_cast<std::uint32_t>(rec.hangul_text.size()));
      w.str(rec.hangul_text);
      w.u32(static_cast<std::uint32_t>(rec.latin_text.size()));
      w.str(rec.latin_text);
      w.u16(static_cast<std::uint16_t>(m.canvas_h));
      w.u16(static_cast<std::uint16_t>(m.canvas_w));
      w.bytes(rec.input_bits.data(), rec.input_bits.size());
      w.u16(static_cast<std::uint16_t>(m.canvas_h));
      w.u16(static_cast<std::uint16_t>(m.canvas_w));
      w.bytes(rec.target_bits.data(), rec.target_bits.size());
    }
  }

 private:
  struct Record {
    std::string hangul_text;
    std::string latin_text;
    std::vector<std::uint8_t> input_bits;
    std::vector<std::uint8_t> target_bits;
    int length = 0;
  };

  DatasetManifest manifest_;
  std::vector<Record> records_;
};

// Convenience wrapper used by tests and the eval command.
inline std::vector<SamplePair> load_dataset(const std::filesystem::path& path,
                                            DatasetManifest* manifest_out = nullptr) {
  DatasetReader reader(path);
  if (manifest_out) *manifest_out = reader.manifest();
  std::vector<SamplePair> out(reader.size());
  for (std::size_t i = 0; i < reader.size(); ++i) out[i] = reader.pair(i);
  return out;
}

}  // namespace tforge::data
