#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "tpr/ops.hpp"
#include "tpr/pyramid.hpp"

using namespace tpr;

TEST_CASE("96x96 frame yields 12/6/3/2 level sizes") {
  std::mt19937_64 rng(1);
  Tensor frame = testutil::random_tensor({3, 96, 96}, rng, 0, 1);
  ParamStore params(1);
  BackboneConfig cfg;
  FeaturePyramid p = build_pyramid(frame, cfg, params);
  REQUIRE(p.count() == 4);
  CHECK(p.size(0) == std::pair<int, int>{12, 12});
  CHECK(p.size(1) == std::pair<int, int>{6, 6});
  CHECK(p.size(2) == std::pair<int, int>{3, 3});
  CHECK(p.size(3) == std::pair<int, int>{2, 2});
  for (int i = 0; i < 4; ++i)
    CHECK(p.levels[static_cast<size_t>(i)].dim(0) == cfg.channels);
}

TEST_CASE("indivisible frame size errors before any compute") {
  ParamStore params(1);
  Tensor frame = Tensor::zeros({3, 90, 96});
  CHECK_THROWS_WITH_AS(build_pyramid(frame, BackboneConfig{}, params),
                       doctest::Contains("H=90"), Error);
  CHECK(params.size() == 0);
}

TEST_CASE("identical frames give bit-identical pyramids") {
  std::mt19937_64 rng(2);
  Tensor frame = testutil::random_tensor({3, 96, 96}, rng, 0, 1);
  ParamStore params(7);
  FeaturePyramid a = build_pyramid(frame, BackboneConfig{}, params);
  FeaturePyramid b = build_pyramid(frame, BackboneConfig{}, params);
  for (int i = 0; i < a.count(); ++i)
    CHECK(testutil::max_abs_diff(a.levels[static_cast<size_t>(i)],
                                 b.levels[static_cast<size_t>(i)]) == 0.0);
}

TEST_CASE("all-zero frame gives an all-zero pyramid (bias-free stack)") {
  ParamStore params(3);
  FeaturePyramid p = build_pyramid(Tensor::zeros({3, 96, 96}), BackboneConfig{},
                                   params);
  for (const Tensor& lvl : p.levels)
    CHECK(lvl.data().abs().maxCoeff() == 0.0);
}

TEST_CASE("adjacent level spatial ratio is two under the ceil rule") {
  std::mt19937_64 rng(4);
  Tensor frame = testutil::random_tensor({3, 104, 88}, rng, 0, 1);
  ParamStore params(4);
  FeaturePyramid p = build_pyramid(frame, BackboneConfig{}, params);
  for (int i = 0; i + 1 < p.count(); ++i) {
    auto [h0, w0] = p.size(i);
    auto [h1, w1] = p.size(i + 1);
    CHECK(h1 == (h0 + 1) / 2);
    CHECK(w1 == (w0 + 1) / 2);
  }
}

TEST_CASE("pyramid gradient reaches the backbone parameters") {
  ParamStore params(5);
  std::mt19937_64 rng(5);
  Tensor frame = testutil::random_tensor({3, 16, 16}, rng, 0, 1);
  BackboneConfig cfg;
  cfg.levels = 2;
  auto f = [&]() {
    FeaturePyramid p = build_pyramid(frame, cfg, params);
    Tensor acc = ops::sum(ops::mul(p.levels[0], p.levels[0]));
    return ops::add(acc, ops::sum(p.levels[1]));
  };
  CHECK(finite_diff_check(f, params, 1e-5, 64, 5) < 1e-5);
  CHECK(params.has("backbone.stem1.w"));
}

TEST_CASE("resize_to_scale identity, constants, and mean-pool oracle") {
  std::mt19937_64 rng(6);
  Tensor x = testutil::random_tensor({2, 6, 6}, rng);
  CHECK(resize_to_scale(x, 0).impl() == x.impl());

  Tensor c = Tensor::full({1, 5, 5}, 3.25);
  Tensor up = resize_to_scale(c, -1);
  CHECK(up.shape() == Shape{1, 10, 10});
  CHECK((up.data() - 3.25).abs().maxCoeff() < 1e-15);

  Tensor ramp = Tensor::from_data(
      {1, 4, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  Tensor down = resize_to_scale(ramp, 1);
  // independent 2x2 mean-pool oracle
  for (int y = 0; y < 2; ++y)
    for (int xx = 0; xx < 2; ++xx) {
      double m = (ramp.at(0, 2 * y, 2 * xx) + ramp.at(0, 2 * y, 2 * xx + 1) +
                  ramp.at(0, 2 * y + 1, 2 * xx) +
                  ramp.at(0, 2 * y + 1, 2 * xx + 1)) /
                 4.0;
      CHECK(down.at(0, y, xx) == doctest::Approx(m));
    }
}

TEST_CASE("resize_between_strides rejects non-power-of-two ratios") {
  Tensor x = Tensor::zeros({1, 6, 6});
  CHECK_THROWS_AS(resize_between_strides(x, 8, 24), Error);
  CHECK(resize_between_strides(x, 8, 16).shape() == Shape{1, 3, 3});
  CHECK(resize_between_strides(x, 16, 8).shape() == Shape{1, 12, 12});
}
