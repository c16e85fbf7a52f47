#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "tforge/dataset.hpp"
#include "tforge/train.hpp"

using namespace tforge;
using namespace tforge::data;

namespace {

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir;
}

const glyphs::GlyphAtlas& small_atlas() {
  static const glyphs::GlyphAtlas atlas = train::build_default_atlas(1);
  return atlas;
}

}  // namespace

TEST_CASE("split_pool produces the documented sizes") {
  auto s = split_pool(0.8, 11);
  CHECK(s.train_chars.size() == 8937);
  CHECK(s.test_chars.size() == 2235);
  auto h = split_pool(0.5, 99);
  CHECK(h.train_chars.size() == 5586);
  CHECK(h.test_chars.size() == 5586);
}

TEST_CASE("split_pool is deterministic and disjoint") {
  auto a = split_pool(0.8, 42);
  auto b = split_pool(0.8, 42);
  CHECK(a.train_chars == b.train_chars);
  CHECK(a.test_chars == b.test_chars);
  std::set<char32_t> train(a.train_chars.begin(), a.train_chars.end());
  for (char32_t c : a.test_chars) REQUIRE(train.count(c) == 0);
  CHECK(a.train_chars.size() + a.test_chars.size() == 11172);
  CHECK_THROWS_AS(split_pool(0.0, 1), IndexOutOfRange);
  CHECK_THROWS_AS(split_pool(1.0, 1), IndexOutOfRange);
}

TEST_CASE("restrict_pool shrinks only the training side") {
  auto s = split_pool(0.8, 11);
  auto r = restrict_pool(s, 0.25, 7);
  CHECK(r.train_chars.size() == 2234);  // floor(0.25 * 8937)
  CHECK(r.test_chars == s.test_chars);
  std::set<char32_t> orig(s.train_chars.begin(), s.train_chars.end());
  for (char32_t c : r.train_chars) REQUIRE(orig.count(c) == 1);

  auto full = restrict_pool(s, 1.0, 7);
  CHECK(full.train_chars == s.train_chars);
  CHECK_THROWS_AS(restrict_pool(s, 0.0, 7), IndexOutOfRange);
}

TEST_CASE("sample_sequences balances lengths and honours the pool") {
  auto s = split_pool(0.8, 11);
  auto seqs = sample_sequences(s.train_chars, 50, 3, 1, 10);
  REQUIRE(seqs.size() == 50);
  std::map<std::size_t, int> by_len;
  for (const auto& q : seqs) by_len[q.size()]++;
  for (int len = 1; len <= 10; ++len) REQUIRE(by_len[static_cast<std::size_t>(len)] == 5);

  std::set<char32_t> pool(s.train_chars.begin(), s.train_chars.end());
  auto more = sample_sequences(s.train_chars, 1000, 5, 1, 10);
  for (const auto& q : more)
    for (char32_t c : q) REQUIRE(pool.count(c) == 1);

  CHECK(sample_sequences(s.train_chars, 50, 3, 1, 10) == seqs);
}

TEST_CASE("sample_sequences rejects a count that does not divide") {
  auto s = split_pool(0.8, 11);
  CHECK_THROWS_AS(sample_sequences(s.train_chars, 55, 3, 1, 10), CountNotDivisible);
  CHECK_THROWS_AS(sample_sequences(s.train_chars, 50, 3, 1, 3), CountNotDivisible);
}

TEST_CASE("a singleton pool forces the sequence content") {
  std::vector<char32_t> pool{U'가'};
  auto seqs = sample_sequences(pool, 10, 9, 1, 10);
  REQUIRE(seqs.size() == 10);
  std::sort(seqs.begin(), seqs.end(),
            [](const auto& a, const auto& b) { return a.size() < b.size(); });
  for (std::size_t i = 0; i < 10; ++i) {
    REQUIRE(seqs[i].size() == i + 1);
    for (char32_t c : seqs[i]) REQUIRE(c == U'가');
  }
}

TEST_CASE("build_pairs renders romanized targets in order") {
  const auto& atlas = small_atlas();
  std::vector<std::u32string> seqs{U"히", U"히파"};
  auto pairs = build_pairs(seqs, atlas, atlas, hangul::default_table(), 32, 240);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].latin_text == "hi");
  CHECK(pairs[1].latin_text == "hi-pa");
  CHECK(pairs[0].length == 1);
  CHECK(pairs[1].length == 2);
  auto expect = glyphs::render_text(atlas, U"hi", 32, 240);
  CHECK(pairs[0].target == expect);
  auto expect_in = glyphs::render_text(atlas, U"히", 32, 240);
  CHECK(pairs[0].input == expect_in);

  std::vector<std::u32string> none;
  CHECK(build_pairs(none, atlas, atlas, hangul::default_table(), 32, 240).empty());
}

TEST_CASE("worst-case romanization width fits the paper canvas or fails loudly") {
  const auto& atlas = small_atlas();
  const auto& table = hangul::default_table();
  // widest romanization: every component at its maximum length
  std::size_t max_len = 0;
  char32_t worst = hangul::kSyllableBase;
  for (char32_t cp = hangul::kSyllableBase; cp <= hangul::kSyllableLast; ++cp) {
    auto r = hangul::romanize_syllable(hangul::decompose(cp), table);
    if (r.size() > max_len) {
      max_len = r.size();
      worst = cp;
    }
  }
  REQUIRE(max_len == 7);
  std::vector<std::u32string> seqs{std::u32string(10, worst)};
  // 79 glyphs at advance 6 -> 474 px, fits the 800-wide canvas
  auto pairs = build_pairs(seqs, atlas, atlas, table, 32, 800);
  CHECK(pairs[0].latin_text.size() == 79);
  // but not a 240-wide canvas
  CHECK_THROWS_AS(build_pairs(seqs, atlas, atlas, table, 32, 240), OverflowsCanvas);
}

TEST_CASE("dataset file round trip preserves pairs and manifest") {
  auto dir = temp_dir("tforge_dataset_rt");
  const auto& atlas = small_atlas();
  auto split = split_pool(0.8, 11);
  auto seqs = sample_sequences(split.train_chars, 12, 3, 1, 3);
  auto pairs = build_pairs(seqs, atlas, atlas, hangul::default_table(), 32, 240);

  DatasetManifest m;
  m.pool_seed = 11;
  m.sample_seed = 3;
  m.len_min = 1;
  m.len_max = 3;
  m.canvas_h = 32;
  m.canvas_w = 240;
  m.hangul_atlas_id = atlas.name;
  m.latin_atlas_id = atlas.name;
  m.table_id = "builtin";
  auto path = dir / "set.iids";
  save_dataset(pairs, m, path);

  DatasetReader reader(path);
  REQUIRE(reader.size() == pairs.size());
  CHECK(reader.manifest().canvas_w == 240);
  CHECK(reader.manifest().counts_per_length.at(1) == 4);
  CHECK(reader.manifest().counts_per_length.at(2) == 4);
  CHECK(reader.manifest().counts_per_length.at(3) == 4);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto p = reader.pair(i);
    REQUIRE(p == pairs[i]);
  }
  CHECK_THROWS_AS(reader.pair(pairs.size()), IndexOutOfRange);

  auto all = load_dataset(path);
  REQUIRE(all.size() == pairs.size());
  CHECK(all[3] == pairs[3]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset reader rejects corrupted files") {
  auto dir = temp_dir("tforge_dataset_bad");
  auto path = dir / "bad.iids";
  {
    std::ofstream os(path, std::ios::binary);
    os << "WRONGstuff";
  }
  CHECK_THROWS_AS(DatasetReader(path), FormatError);
  CHECK_THROWS_AS(DatasetReader(dir / "missing.iids"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("packed dataset matches the pair list it came from") {
  const auto& atlas = small_atlas();
  auto split = split_pool(0.8, 11);
  auto seqs = sample_sequences(split.train_chars, 9, 3, 1, 3);
  auto pairs = build_pairs(seqs, atlas, atlas, hangul::default_table(), 32, 240);
  DatasetManifest m;
  m.canvas_h = 32;
  m.canvas_w = 240;
  auto packed = PackedDataset::from_pairs(pairs, m);
  REQUIRE(packed.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(packed.pair(i) == pairs[i]);
  CHECK_THROWS_AS(packed.pair(pairs.size()), IndexOutOfRange);

  auto generated = PackedDataset::generate(seqs, atlas, atlas, hangul::default_table(), m);
  REQUIRE(generated.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(generated.pair(i) == pairs[i]);

  auto dir = temp_dir("tforge_dataset_packed");
  auto path = dir / "packed.iids";
  generated.save(path);
  auto reloaded = PackedDataset::from_file(path);
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(reloaded.pair(i) == pairs[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated experiment data keeps pools character-disjoint") {
  train::ExperimentConfig cfg;
  cfg.canvas_h = 32;
  cfg.canvas_w = 240;
  cfg.train_count = 30;
  cfg.test_count = 15;
  cfg.len_min = 1;
  cfg.len_max = 3;
  auto atlas = train::build_default_atlas(1);
  auto gen = train::generate_datasets(cfg, atlas, hangul::default_table());

  std::set<char32_t> train_used, test_used;
  for (std::size_t i = 0; i < gen.train.size(); ++i)
    for (char32_t c : utf8::decode(gen.train.pair(i).hangul_text)) train_used.insert(c);
  for (std::size_t i = 0; i < gen.test.size(); ++i)
    for (char32_t c : utf8::decode(gen.test.pair(i).hangul_text)) test_used.insert(c);
  for (char32_t c : test_used) REQUIRE(train_used.count(c) == 0);

  // target strings re-romanize correctly
  for (std::size_t i = 0; i < gen.train.size(); ++i) {
    auto p = gen.train.pair(i);
    REQUIRE(p.latin_text ==
            hangul::romanize_sequence(utf8::decode(p.hangul_text), hangul::default_table()));
  }

  // uniform length histogram
  const auto& counts = gen.train.manifest().counts_per_length;
  REQUIRE(counts.at(1) == 10);
  REQUIRE(counts.at(2) == 10);
  REQUIRE(counts.at(3) == 10);
}

TEST_CASE("pool restriction flows through generated data") {
  train::ExperimentConfig cfg;
  cfg.canvas_h = 32;
  cfg.canvas_w = 240;
  cfg.train_count = 12;
  cfg.test_count = 6;
  cfg.len_min = 1;
  cfg.len_max = 3;
  cfg.pool_fraction = 0.25;
  auto atlas = train::build_default_atlas(1);
  auto gen = train::generate_datasets(cfg, atlas, hangul::default_table());
  CHECK(gen.split.train_chars.size() == 2234);
  CHECK(gen.split.test_chars.size() == 2235);

  train::ExperimentConfig full = cfg;
  full.pool_fraction = 1.0;
  auto gen_full = train::generate_datasets(full, atlas, hangul::default_table());
  CHECK(gen_full.split.test_chars == gen.split.test_chars);
}
