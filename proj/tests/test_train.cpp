#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "tforge/threading.hpp"
#include "tforge/train.hpp"

using namespace tforge;
using namespace tforge::train;

namespace {

// Tiny end-to-end setup: 16x64 canvas, single-syllable sequences, halved
// channel schedule. Small enough for CI, real enough to descend.
struct Tiny {
  ExperimentConfig cfg;
  glyphs::GlyphAtlas atlas;
  GeneratedData data;

  explicit Tiny(std::uint64_t seed = 1, std::uint64_t count = 64) {
    cfg.canvas_h = 16;
    cfg.canvas_w = 64;
    cfg.train_count = count;
    cfg.test_count = 8;
    cfg.len_min = 1;
    cfg.len_max = 1;
    cfg.hangul_cell = 12;
    cfg.latin_cell_h = 8;
    cfg.latin_cell_w = 5;
    cfg.atlas_seed = seed;
    cfg.batch_size = 16;
    atlas = build_default_atlas(cfg.atlas_seed, cfg.hangul_cell, cfg.latin_cell_h,
                                cfg.latin_cell_w);
    data = generate_datasets(cfg, atlas, hangul::default_table());
  }

  models::Model<float> model(std::uint64_t init_seed = 3) const {
    return models::Model<float>(
        models::NetworkSpec::make(models::Arch::SCN, cfg.canvas_h, cfg.canvas_w, 4),
        init_seed);
  }
};

std::vector<std::vector<float>> weights_of(models::Model<float>& m) {
  std::vector<std::vector<float>> out;
  for (auto& p : m.raw_params()) out.emplace_back(p->value.v.begin(), p->value.v.end());
  return out;
}

}  // namespace

TEST_CASE("two epochs on tiny pairs descend") {
  Tiny tiny;
  auto model = tiny.model();
  nn::Adam<float> adam;
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 16;
  opt.shuffle_seed = 4;
  opt.snapshot_every = 0;
  opt.checkpoint_every = 0;
  auto log = train_model(model, adam, tiny.data.train, nullptr, nullptr, opt);
  REQUIRE(log.size() == 2);
  CHECK(log[1].mean_loss < log[0].mean_loss);
  CHECK(log[0].epoch == 1);
  CHECK(log[1].epoch == 2);
}

TEST_CASE("resumed training lands on the identical weights") {
  auto dir = std::filesystem::temp_directory_path() / "tforge_train_resume";
  std::filesystem::create_directories(dir);
  auto path = dir / "ck.scnw";
  Tiny tiny;

  // two epochs straight
  auto straight = tiny.model();
  nn::Adam<float> adam_a;
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 16;
  opt.shuffle_seed = 4;
  opt.snapshot_every = 0;
  opt.checkpoint_every = 0;
  train_model(straight, adam_a, tiny.data.train, nullptr, nullptr, opt);

  // one epoch, checkpoint, restore, one more epoch
  auto part = tiny.model();
  nn::Adam<float> adam_b;
  TrainOptions opt1 = opt;
  opt1.epochs = 1;
  train_model(part, adam_b, tiny.data.train, nullptr, nullptr, opt1);
  models::save_checkpoint(models::Checkpoint::from_model(part, &adam_b, 1, 4), path);

  auto ck = models::load_checkpoint(path);
  nn::Adam<float> adam_c;
  auto resumed = ck.restore(&adam_c);
  REQUIRE(ck.epoch == 1);
  TrainOptions opt2 = opt;
  opt2.start_epoch = static_cast<int>(ck.epoch);
  opt2.shuffle_seed = ck.train_seed;
  train_model(resumed, adam_c, tiny.data.train, nullptr, nullptr, opt2);

  auto wa = weights_of(straight);
  auto wb = weights_of(resumed);
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) REQUIRE(wa[i] == wb[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a batch larger than the dataset degrades to one batch per epoch") {
  Tiny tiny(2, 8);
  auto model = tiny.model();
  nn::Adam<float> adam;
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch_size = 64;  // dataset has 8 pairs
  opt.snapshot_every = 0;
  opt.checkpoint_every = 0;
  auto log = train_model(model, adam, tiny.data.train, nullptr, nullptr, opt);
  REQUIRE(log.size() == 1);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("shape mismatches surface before the first batch") {
  Tiny tiny;
  models::Model<float> wrong(models::NetworkSpec::make(models::Arch::SCN, 32, 240, 4), 3);
  nn::Adam<float> adam;
  TrainOptions opt;
  opt.epochs = 1;
  CHECK_THROWS_AS(train_model(wrong, adam, tiny.data.train, nullptr, nullptr, opt),
                  ShapeMismatch);
}

TEST_CASE("snapshots appear on the configured cadence") {
  Tiny tiny;
  auto model = tiny.model();
  nn::Adam<float> adam;
  TrainOptions opt;
  opt.epochs = 4;
  opt.batch_size = 32;
  opt.snapshot_every = 2;
  opt.checkpoint_every = 3;
  std::vector<int> checkpoints;
  opt.on_checkpoint = [&](int e) { checkpoints.push_back(e); };
  auto log = train_model(model, adam, tiny.data.train, &tiny.data.test, &tiny.atlas, opt);
  REQUIRE(log.size() == 4);
  CHECK_FALSE(log[0].snapshot.has_value());
  CHECK(log[1].snapshot.has_value());
  CHECK_FALSE(log[2].snapshot.has_value());
  CHECK(log[3].snapshot.has_value());  // final epoch always evaluates
  CHECK(log[1].snapshot->count == tiny.data.test.size());
  CHECK(checkpoints == std::vector<int>{3, 4});

  // log serializes
  auto j = log[1].to_json();
  CHECK(j.contains("snapshot"));
  CHECK(j["epoch"] == 2);
}

TEST_CASE("training is invariant to the worker count") {
  Tiny tiny(3, 32);
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 16;
  opt.snapshot_every = 0;
  opt.checkpoint_every = 0;

  threading::set_global_pool_size(1);
  auto m1 = tiny.model();
  nn::Adam<float> a1;
  train_model(m1, a1, tiny.data.train, nullptr, nullptr, opt);
  auto w1 = weights_of(m1);

  threading::set_global_pool_size(4);
  auto m4 = tiny.model();
  nn::Adam<float> a4;
  train_model(m4, a4, tiny.data.train, nullptr, nullptr, opt);
  auto w4 = weights_of(m4);
  threading::set_global_pool_size(0);

  REQUIRE(w1.size() == w4.size());
  for (std::size_t i = 0; i < w1.size(); ++i) REQUIRE(w1[i] == w4[i]);
}

TEST_CASE("evaluate_model scores a perfect copy at F 1.0") {
  Tiny tiny(4, 16);
  // identity check at the evaluation-harness level: feeding targets as
  // outputs yields perfect scores on every pair
  std::vector<eval::PairEval> evals(tiny.data.test.size());
  for (std::size_t i = 0; i < tiny.data.test.size(); ++i) {
    auto p = tiny.data.test.pair(i);
    evals[i] = eval::evaluate_pair(p.target, p.target, p.latin_text, tiny.atlas);
    evals[i].length = p.length;
  }
  auto s = summarize(evals);
  CHECK(s.mean_f == 1.0);
  CHECK(s.mean_hamming == 0.0);
  CHECK(s.mean_sed == 0.0);
}

TEST_CASE("experiment config round trips through json and rejects junk") {
  ExperimentConfig cfg;
  cfg.arch = "UNET";
  cfg.epochs = 7;
  cfg.pool_fraction = 0.25;
  auto j = cfg.to_json();
  auto back = ExperimentConfig::from_json(j);
  CHECK(back.arch == "UNET");
  CHECK(back.epochs == 7);
  CHECK(back.pool_fraction == 0.25);
  CHECK(back.to_json() == j);

  nlohmann::json junk{{"epoch", 3}};  // typo for epochs
  CHECK_THROWS_AS(ExperimentConfig::from_json(junk), FormatError);
  nlohmann::json bad{{"batch_size", 0}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), FormatError);
}
