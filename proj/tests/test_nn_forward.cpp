#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/oracles.hpp"
#include "tforge/nn/graph.hpp"
#include "tforge/nn/kernels.hpp"
#include "tforge/threading.hpp"

using namespace tforge;
using namespace tforge::nn;
using oracles::random_tensor;

namespace {
constexpr float kTol = 1e-4f;
}

TEST_CASE("conv3x3 identity kernel reproduces the input") {
  auto g = rng::engine(1);
  auto x = random_tensor<float>(2, 1, 6, 9, g);
  Tensor<float> w(1, 1, 3, 3), b(1, 1, 1, 1);
  w.at(0, 0, 1, 1) = 1.0f;
  auto y = kernels::conv3x3_forward(x, w, b);
  CHECK(oracles::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv3x3 zero kernel gives zero output") {
  auto g = rng::engine(2);
  auto x = random_tensor<float>(1, 3, 4, 5, g);
  Tensor<float> w(2, 3, 3, 3), b(1, 2, 1, 1);
  auto y = kernels::conv3x3_forward(x, w, b);
  for (float v : y.v) REQUIRE(v == 0.0f);
}

TEST_CASE("conv3x3 matches the nested-loop reference") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto g = rng::engine(seed);
    int n = 1 + static_cast<int>(rng::below(g, 3));
    int cin = 1 + static_cast<int>(rng::below(g, 4));
    int cout = 1 + static_cast<int>(rng::below(g, 4));
    int h = 1 + static_cast<int>(rng::below(g, 8));
    int w = 1 + static_cast<int>(rng::below(g, 10));
    auto x = random_tensor<float>(n, cin, h, w, g);
    auto wt = random_tensor<float>(cout, cin, 3, 3, g);
    auto b = random_tensor<float>(1, cout, 1, 1, g);
    auto got = kernels::conv3x3_forward(x, wt, b);
    auto want = oracles::conv3x3_reference(x, wt, b);
    REQUIRE(oracles::max_abs_diff(got, want) < kTol);
  }
}

TEST_CASE("conv3x3 rejects mismatched channels") {
  Tensor<float> x(1, 2, 4, 4), w(3, 3, 3, 3), b(1, 3, 1, 1);
  CHECK_THROWS_AS(kernels::conv3x3_forward(x, w, b), ShapeMismatch);
}

TEST_CASE("conv1x1 identity and constant cases") {
  auto g = rng::engine(3);
  auto x = random_tensor<float>(2, 1, 5, 7, g);
  Tensor<float> w(1, 1, 1, 1), b(1, 1, 1, 1);
  w.at(0, 0, 0, 0) = 1.0f;
  auto y = kernels::conv1x1_forward(x, w, b);
  CHECK(oracles::max_abs_diff(x, y) == 0.0);

  Tensor<float> w0(2, 1, 1, 1), bk(1, 2, 1, 1);
  bk.at(0, 0, 0, 0) = 3.5f;
  bk.at(0, 1, 0, 0) = -1.0f;
  auto yk = kernels::conv1x1_forward(x, w0, bk);
  for (int s = 0; s < yk.n; ++s)
    for (int y2 = 0; y2 < yk.h; ++y2)
      for (int x2 = 0; x2 < yk.w; ++x2) {
        REQUIRE(yk.at(s, 0, y2, x2) == 3.5f);
        REQUIRE(yk.at(s, 1, y2, x2) == -1.0f);
      }
}

TEST_CASE("conv1x1 matches the per-pixel matmul reference") {
  for (std::uint64_t seed = 100; seed < 200; ++seed) {
    auto g = rng::engine(seed);
    int n = 1 + static_cast<int>(rng::below(g, 3));
    int cin = 1 + static_cast<int>(rng::below(g, 5));
    int cout = 1 + static_cast<int>(rng::below(g, 5));
    int h = 1 + static_cast<int>(rng::below(g, 6));
    int w = 1 + static_cast<int>(rng::below(g, 9));
    auto x = random_tensor<float>(n, cin, h, w, g);
    auto wt = random_tensor<float>(cout, cin, 1, 1, g);
    auto b = random_tensor<float>(1, cout, 1, 1, g);
    auto got = kernels::conv1x1_forward(x, wt, b);
    auto want = oracles::conv1x1_reference(x, wt, b);
    REQUIRE(oracles::max_abs_diff(got, want) < kTol);
  }
}

TEST_CASE("maxpool basics") {
  Tensor<float> x(1, 1, 2, 2);
  x.at(0, 0, 0, 0) = 1;
  x.at(0, 0, 0, 1) = 2;
  x.at(0, 0, 1, 0) = 3;
  x.at(0, 0, 1, 1) = 4;
  std::vector<std::uint8_t> mask;
  auto y = kernels::maxpool2x2_forward(x, mask);
  CHECK(y.at(0, 0, 0, 0) == 4.0f);

  Tensor<float> c(2, 3, 4, 6);
  std::fill(c.v.begin(), c.v.end(), 0.25f);
  auto yc = kernels::maxpool2x2_forward(c, mask);
  for (float v : yc.v) REQUIRE(v == 0.25f);
}

TEST_CASE("maxpool rejects odd spatial dims") {
  Tensor<float> x(1, 1, 3, 4);
  std::vector<std::uint8_t> mask;
  CHECK_THROWS_AS(kernels::maxpool2x2_forward(x, mask), OddSpatialDim);
}

TEST_CASE("maxpool matches the patch-max reference") {
  for (std::uint64_t seed = 200; seed < 300; ++seed) {
    auto g = rng::engine(seed);
    int n = 1 + static_cast<int>(rng::below(g, 3));
    int c = 1 + static_cast<int>(rng::below(g, 4));
    int h = 2 * (1 + static_cast<int>(rng::below(g, 4)));
    int w = 2 * (1 + static_cast<int>(rng::below(g, 5)));
    auto x = random_tensor<float>(n, c, h, w, g);
    std::vector<std::uint8_t> mask;
    auto got = kernels::maxpool2x2_forward(x, mask);
    auto want = oracles::maxpool_reference(x);
    REQUIRE(oracles::max_abs_diff(got, want) == 0.0);
  }
}

TEST_CASE("upsample replicates pixels and inverts under maxpool") {
  Tensor<float> one(1, 1, 1, 1);
  one.at(0, 0, 0, 0) = 2.5f;
  auto up1 = kernels::upsample2x_forward(one);
  for (float v : up1.v) REQUIRE(v == 2.5f);
  REQUIRE(up1.h == 2);
  REQUIRE(up1.w == 2);

  for (std::uint64_t seed = 300; seed < 400; ++seed) {
    auto g2 = rng::engine(seed);
    int n = 1 + static_cast<int>(rng::below(g2, 2));
    int c = 1 + static_cast<int>(rng::below(g2, 3));
    int h = 1 + static_cast<int>(rng::below(g2, 5));
    int w = 1 + static_cast<int>(rng::below(g2, 6));
    auto x = random_tensor<float>(n, c, h, w, g2);
    auto up = kernels::upsample2x_forward(x);
    // replication then patch-max gives the input back
    std::vector<std::uint8_t> mask;
    auto down = kernels::maxpool2x2_forward(up, mask);
    REQUIRE(oracles::max_abs_diff(down, x) == 0.0);
    // total mass scales by 4
    double sx = 0, su = 0;
    for (float v : x.v) sx += v;
    for (float v : up.v) su += v;
    REQUIRE(std::abs(su - 4.0 * sx) < 1e-3);
  }
}

TEST_CASE("dense identity weights reproduce the input") {
  auto g = rng::engine(6);
  auto x = random_tensor<float>(3, 1, 1, 5, g);
  Tensor<float> w(5, 5, 1, 1), b(1, 5, 1, 1);
  for (int i = 0; i < 5; ++i) w.at(i, i, 0, 0) = 1.0f;
  auto y = kernels::dense_forward(x, w, b);
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 5; ++i) REQUIRE(y.sample(s)[i] == x.sample(s)[i]);
}

TEST_CASE("dense matches the double-loop reference") {
  for (std::uint64_t seed = 400; seed < 500; ++seed) {
    auto g = rng::engine(seed);
    int n = 1 + static_cast<int>(rng::below(g, 4));
    int din = 1 + static_cast<int>(rng::below(g, 12));
    int dout = 1 + static_cast<int>(rng::below(g, 10));
    auto x = random_tensor<float>(n, 1, 1, din, g);
    auto wt = random_tensor<float>(dout, din, 1, 1, g);
    auto b = random_tensor<float>(1, dout, 1, 1, g);
    auto got = kernels::dense_forward(x, wt, b);
    auto want = oracles::dense_reference(x, wt, b);
    REQUIRE(oracles::max_abs_diff(got, want) < kTol);
  }
}

TEST_CASE("dense accepts an empty batch") {
  Tensor<float> x(0, 1, 1, 4);
  Tensor<float> w(3, 4, 1, 1), b(1, 3, 1, 1);
  auto y = kernels::dense_forward(x, w, b);
  CHECK(y.n == 0);
  CHECK(y.c == 3);
}

TEST_CASE("dense rejects mismatched input size") {
  Tensor<float> x(1, 1, 1, 4);
  Tensor<float> w(3, 5, 1, 1), b(1, 3, 1, 1);
  CHECK_THROWS_AS(kernels::dense_forward(x, w, b), ShapeMismatch);
}

TEST_CASE("relu and sigmoid pointwise values") {
  Tensor<float> x(1, 1, 1, 3);
  x.v = {-1.0f, 0.0f, 2.0f};
  auto r = kernels::relu_forward(x);
  CHECK(r.v[0] == 0.0f);
  CHECK(r.v[1] == 0.0f);
  CHECK(r.v[2] == 2.0f);
  Tensor<float> z(1, 1, 1, 1);
  auto s = kernels::sigmoid_forward(z);
  CHECK(s.v[0] == Catch::Approx(0.5));
}

TEST_CASE("sigmoid symmetry s(x) + s(-x) = 1") {
  auto g = rng::engine(7);
  auto x = random_tensor<double>(2, 2, 3, 4, g, -8.0, 8.0);
  auto xm = x;
  for (auto& v : xm.v) v = -v;
  auto a = kernels::sigmoid_forward(x);
  auto b = kernels::sigmoid_forward(xm);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.v[i] + b.v[i] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(a.v[i] > 0.0);
    REQUIRE(a.v[i] < 1.0);
  }
}

TEST_CASE("bce at the perfect prediction is near zero") {
  Tensor<float> t(1, 1, 2, 2);
  t.v = {0, 1, 1, 0};
  Tensor<float> p = t;
  CHECK(kernels::bce_forward(p, t) <= 1e-6f);
}

TEST_CASE("bce of a uniform half prediction is ln 2") {
  auto g = rng::engine(8);
  Tensor<float> t(1, 1, 4, 8);
  for (auto& v : t.v) v = rng::below(g, 2) ? 1.0f : 0.0f;
  Tensor<float> p(1, 1, 4, 8);
  std::fill(p.v.begin(), p.v.end(), 0.5f);
  CHECK(kernels::bce_forward(p, t) == Catch::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("bce matches the scalar-loop reference and stays non-negative") {
  for (std::uint64_t seed = 500; seed < 600; ++seed) {
    auto g = rng::engine(seed);
    int h = 1 + static_cast<int>(rng::below(g, 6));
    int w = 1 + static_cast<int>(rng::below(g, 6));
    auto p = random_tensor<float>(1, 1, h, w, g, 0.001, 0.999);
    Tensor<float> t(1, 1, h, w);
    for (auto& v : t.v) v = rng::below(g, 2) ? 1.0f : 0.0f;
    float got = kernels::bce_forward(p, t);
    REQUIRE(got >= 0.0f);
    REQUIRE(got == Catch::Approx(oracles::bce_reference(p, t)).epsilon(1e-5));
  }
}

TEST_CASE("bce rejects shape mismatches") {
  Tensor<float> p(1, 1, 2, 2), t(1, 1, 2, 3);
  CHECK_THROWS_AS(kernels::bce_forward(p, t), ShapeMismatch);
}

TEST_CASE("results do not depend on the worker count") {
  auto make = [] {
    auto g = rng::engine(42);
    auto x = random_tensor<float>(4, 3, 8, 12, g);
    auto wt = random_tensor<float>(5, 3, 3, 3, g);
    auto b = random_tensor<float>(1, 5, 1, 1, g);
    auto y = kernels::conv3x3_forward(x, wt, b);
    auto s = kernels::sigmoid_forward(y);
    Tensor<float> t(s.n, s.c, s.h, s.w);
    float loss = kernels::bce_forward(s, t);
    std::vector<std::uint8_t> mask;
    auto pooled = kernels::maxpool2x2_forward(y, mask);
    return std::make_tuple(y, s, loss, pooled);
  };
  threading::set_global_pool_size(1);
  auto a = make();
  threading::set_global_pool_size(4);
  auto b = make();
  threading::set_global_pool_size(0);  // back to a single worker default
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<1>(a) == std::get<1>(b));
  CHECK(std::get<2>(a) == std::get<2>(b));
  CHECK(std::get<3>(a) == std::get<3>(b));
}
