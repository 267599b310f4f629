#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "tpr/ops.hpp"
#include "tpr/param_store.hpp"

using namespace tpr;
using namespace tpr::ops;

TEST_CASE("conv2d identity kernel reproduces the input") {
  std::mt19937_64 rng(7);
  Tensor x = testutil::random_tensor({3, 6, 5}, rng);
  Array kd = Array::Zero(3 * 3 * 3 * 3);
  for (int c = 0; c < 3; ++c) kd[(c * 3 + c) * 9 + 4] = 1.0;  // center tap
  Tensor k = make_leaf({3, 3, 3, 3}, kd);
  Tensor y = conv2d(x, k);
  CHECK(testutil::max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d all-zero mask gives all-zero output") {
  std::mt19937_64 rng(8);
  Tensor x = testutil::random_tensor({2, 5, 5}, rng);
  Tensor k = testutil::random_tensor({4, 2, 3, 3}, rng);
  SpatialMask mask;
  mask.h = 5;
  mask.w = 5;
  mask.on.assign(25, 0);
  Tensor y = conv2d(x, k, nullptr, 1, -1, &mask);
  CHECK(y.data().abs().maxCoeff() == 0.0);
}

TEST_CASE("masked conv equals dense conv times mask (reference oracle)") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> cdist(1, 4), sdist(4, 9);
    const int cin = cdist(rng), cout = cdist(rng);
    const int h = sdist(rng), w = sdist(rng);
    Tensor x = testutil::random_tensor({cin, h, w}, rng);
    Tensor k = testutil::random_tensor({cout, cin, 3, 3}, rng);
    auto mask = testutil::random_mask(h, w, rng);

    std::vector<double> xref(x.data().data(), x.data().data() + x.numel());
    std::vector<double> kref(k.data().data(), k.data().data() + k.numel());
    auto dense = testutil::naive_conv2d(xref, cin, h, w, kref, cout, 3, 1, 1);
    for (int co = 0; co < cout; ++co)
      for (int i = 0; i < h * w; ++i)
        if (!mask.on[static_cast<size_t>(i)])
          dense[static_cast<size_t>(co) * h * w + i] = 0.0;

    Tensor masked = conv2d(x, k, nullptr, 1, -1, &mask);
    CHECK(testutil::max_abs_diff(masked, dense) < 1e-12);
  }
}

TEST_CASE("bilinear_sample contract") {
  Tensor x = Tensor::from_data({1, 4, 4}, {0, 1, 2,  3,  4,  5,  6,  7,
                                            8, 9, 10, 11, 12, 13, 14, 15});
  CHECK(bilinear_sample(x, 2.0, 3.0, 0) == doctest::Approx(11.0));
  // 1-D ramp row: value at x=1.5 on row 0 is 1.5
  CHECK(bilinear_sample(x, 0.0, 1.5, 0) == doctest::Approx(1.5));
  CHECK(bilinear_sample(x, -5.0, -5.0, 0) == 0.0);
}

TEST_CASE("elementwise suite basics") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));

  std::mt19937_64 rng(10);
  Tensor x = testutil::random_tensor({3, 5, 7}, rng);
  Tensor up = upsample_bilinear2x(x);
  CHECK(up.shape() == Shape{3, 10, 14});

  Tensor m = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  Tensor pooled = maxpool2d(m, 2);
  CHECK(pooled.shape() == Shape{1, 1, 1});
  CHECK(pooled.item() == 4.0);
}

TEST_CASE("conv2d reports the offending dimension on mismatch") {
  std::mt19937_64 rng(11);
  Tensor x = testutil::random_tensor({3, 5, 5}, rng);
  Tensor k = testutil::random_tensor({4, 2, 3, 3}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, k),
                       doctest::Contains("Cin=2"), Error);
}

TEST_CASE("backward on linear and quadratic functionals") {
  std::mt19937_64 rng(12);
  Tensor x = testutil::random_tensor({2, 3, 3}, rng, -1, 1, true);
  Tensor loss = sum(x);
  loss.backward();
  CHECK((x.grad() - 1.0).abs().maxCoeff() == 0.0);

  x.zero_grad();
  Tensor loss2 = sum(mul(x, x));
  loss2.backward();
  CHECK((x.grad() - 2.0 * x.data()).abs().maxCoeff() < 1e-14);
}

TEST_CASE("backward accumulates until reset") {
  Tensor x = make_leaf({2}, Array::Constant(2, 3.0), true);
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == 2.0);
  x.zero_grad();
  sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = make_leaf({3}, Array::Zero(3), true);
  Tensor y = relu(x);
  CHECK_THROWS_AS(y.backward(), Error);
}

TEST_CASE("random op chain matches central finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ParamStore params(seed);
    std::mt19937_64 rng(seed * 131);
    Tensor x = testutil::random_tensor({2, 6, 6}, rng);
    auto f = [&]() {
      Tensor& k1 = params.get("k1", {3, 2, 3, 3}, Init::fan_in_uniform(18));
      Tensor& k2 = params.get("k2", {2, 3, 3, 3}, Init::fan_in_uniform(27));
      Tensor h = tanh_op(conv2d(x, k1));
      Tensor y = sigmoid(conv2d(h, k2));
      return sum(mul(y, y));
    };
    CHECK(finite_diff_check(f, params, 1e-5, 64, seed) < 1e-6);
  }
}

TEST_CASE("finite_diff_check is exact for linear maps") {
  ParamStore params(3);
  std::mt19937_64 rng(33);
  Tensor x = testutil::random_tensor({8}, rng);
  auto f = [&]() {
    Tensor& w = params.get("w", {4, 8}, Init::fan_in_uniform(8));
    return sum(linear(x, w));
  };
  CHECK(finite_diff_check(f, params, 1e-5, 64, 1) < 1e-10);
}

TEST_CASE("finite_diff_check through a sigmoid chain") {
  ParamStore params(4);
  std::mt19937_64 rng(44);
  Tensor x = testutil::random_tensor({6}, rng);
  auto f = [&]() {
    Tensor& w1 = params.get("w1", {5, 6}, Init::fan_in_uniform(6));
    Tensor& w2 = params.get("w2", {3, 5}, Init::fan_in_uniform(5));
    return sum(sigmoid(linear(sigmoid(linear(x, w1)), w2)));
  };
  CHECK(finite_diff_check(f, params, 1e-5, 64, 2) < 1e-6);
}

TEST_CASE("finite_diff_check stays finite near a hard threshold") {
  ParamStore params(5);
  params.get("v", {4}, Init::constant(1e-4));  // 10x the probe epsilon
  auto f = [&]() { return sum(relu(params.at("v"))); };
  const double err = finite_diff_check(f, params, 1e-5, 64, 3);
  CHECK(std::isfinite(err));
}

TEST_CASE("gate activation clipped_tanh") {
  Tensor x = Tensor::from_data({4}, {-2.0, -0.3, 0.4, 2.0});
  Tensor y = clipped_tanh(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(std::tanh(0.4)));
  CHECK(y[3] < 1.0);

  // closed side has zero gradient; open side matches tanh'
  Tensor xg = make_leaf({4}, x.data(), true);
  sum(clipped_tanh(xg)).backward();
  CHECK(xg.grad()[0] == 0.0);
  CHECK(xg.grad()[1] == 0.0);
  CHECK(xg.grad()[2] == doctest::Approx(1.0 - std::pow(std::tanh(0.4), 2)));
}

TEST_CASE("determinism: same seed gives bit-identical values and gradients") {
  auto run = [](std::uint64_t seed) {
    ParamStore params(seed);
    std::mt19937_64 rng(seed);
    Tensor x = testutil::random_tensor({2, 8, 8}, rng, -1, 1, true);
    Tensor& k = params.get("k", {2, 2, 3, 3}, Init::fan_in_uniform(18));
    Tensor y = relu(conv2d(x, k));
    Tensor loss = mean(mul(y, y));
    params.zero_grad();
    loss.backward();
    std::vector<double> out(y.data().data(), y.data().data() + y.numel());
    out.push_back(loss.item());
    const Array& g = k.grad();
    out.insert(out.end(), g.data(), g.data() + g.size());
    return out;
  };
  CHECK(run(17) == run(17));
}

TEST_CASE("concat/split round trip is identity") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> cdist(1, 5), sdist(2, 7);
    const int ca = cdist(rng), cb = cdist(rng);
    const int h = sdist(rng), w = sdist(rng);
    Tensor a = testutil::random_tensor({ca, h, w}, rng);
    Tensor b = testutil::random_tensor({cb, h, w}, rng);
    Tensor cat = concat_channels(a, b);
    CHECK(testutil::max_abs_diff(slice_channels(cat, 0, ca), a) == 0.0);
    CHECK(testutil::max_abs_diff(slice_channels(cat, ca, ca + cb), b) == 0.0);
  }
}

TEST_CASE("mean pooling oracle matches avgpool2x2") {
  Tensor ramp = Tensor::from_data(
      {1, 4, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  Tensor pooled = avgpool2x2(ramp);
  // hand mean-pool of 2x2 blocks
  std::vector<double> expect = {2.5, 4.5, 10.5, 12.5};
  CHECK(testutil::max_abs_diff(pooled, expect) == 0.0);
}

TEST_CASE("resize_bilinear preserves constants and handles odd sizes") {
  Tensor c = Tensor::full({2, 3, 3}, 0.75);
  Tensor up = resize_bilinear(c, 6, 6);
  CHECK((up.data() - 0.75).abs().maxCoeff() < 1e-15);
  Tensor odd = resize_bilinear(c, 2, 2);  // ceil-half of 3
  CHECK((odd.data() - 0.75).abs().maxCoeff() < 1e-15);
}

TEST_CASE("gradients flow only through unmasked conv positions") {
  std::mt19937_64 rng(66);
  Tensor x = testutil::random_tensor({1, 4, 4}, rng, -1, 1, true);
  Tensor k = testutil::random_tensor({1, 1, 3, 3}, rng, -1, 1, true);
  SpatialMask mask;
  mask.h = 4;
  mask.w = 4;
  mask.on.assign(16, 0);
  mask.on[5] = 1;
  Tensor y = conv2d(x, k, nullptr, 1, -1, &mask);
  sum(y).backward();
  // only the 3x3 input neighborhood of output (1,1) can receive gradient
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx) {
      const bool inside = yy <= 2 && xx <= 2;
      if (!inside) CHECK(x.grad()[yy * 4 + xx] == 0.0);
    }
}

TEST_CASE("deform_sample identity, shift and midpoint oracles") {
  std::mt19937_64 rng(77);
  Tensor x = testutil::random_tensor({2, 5, 6}, rng);
  Tensor off0 = Tensor::zeros({18, 5, 6});
  Tensor delta = make_leaf({9}, [] {
    Array w = Array::Zero(9);
    w[4] = 1;
    return w;
  }());

  SUBCASE("zero offsets with delta kernel reproduce the input") {
    Tensor y = deform_sample(x, off0, delta);
    CHECK(testutil::max_abs_diff(y, x) == 0.0);
  }

  SUBCASE("constant (0,+1) offset shifts left with zero fill") {
    Array od = Array::Zero(18 * 5 * 6);
    for (int t = 0; t < 9; ++t)
      for (int i = 0; i < 30; ++i) od[(2 * t + 1) * 30 + i] = 1.0;  // dx = +1
    Tensor off = make_leaf({18, 5, 6}, std::move(od));
    Tensor y = deform_sample(x, off, delta);
    for (int c = 0; c < 2; ++c)
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 6; ++xx) {
          const double expect = xx + 1 < 6 ? x.at(c, yy, xx + 1) : 0.0;
          CHECK(y.at(c, yy, xx) == doctest::Approx(expect));
        }
  }

  SUBCASE("half-pixel offset on a horizontal ramp lands midway") {
    Array ramp(1 * 1 * 8);
    for (int i = 0; i < 8; ++i) ramp[i] = i;
    Tensor r = make_leaf({1, 1, 8}, std::move(ramp));
    Array od = Array::Zero(18 * 8);
    for (int t = 0; t < 9; ++t)
      for (int i = 0; i < 8; ++i) od[(2 * t + 1) * 8 + i] = 0.5;
    Tensor off = make_leaf({18, 1, 8}, std::move(od));
    Tensor y = deform_sample(r, off, delta);
    for (int xx = 1; xx < 6; ++xx)
      CHECK(y.at(0, 0, xx) == doctest::Approx(xx + 0.5));
  }
}

TEST_CASE("softmax building blocks differentiate correctly") {
  ParamStore params(6);
  std::mt19937_64 rng(88);
  Tensor x = testutil::random_tensor({6}, rng);
  auto f = [&]() {
    Tensor& w = params.get("w", {3, 6}, Init::fan_in_uniform(6));
    Tensor probs = softmax_zero(linear(x, w));
    return pick(probs, 1);
  };
  CHECK(finite_diff_check(f, params, 1e-5, 64, 4) < 1e-6);
}
