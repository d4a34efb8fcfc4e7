#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bevocc/gradcheck.hpp"
#include "bevocc/nn.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace bevocc;
using namespace bevocc::testsupport;

TEST_CASE("conv2d 1x1 scaling kernel doubles every element") {
  SplitMix64 rng{1};
  const Tensor input = random_tensor(rng, {1, 4, 5}, -3.0, 3.0);
  Conv2dParams p = Conv2dParams::make(1, 1, 1, 1, 0);
  p.weight(0, 0, 0, 0) = 2.0;
  const Tensor out = conv2d(input, p);
  for (int64_t i = 0; i < input.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(2.0 * input.data()[i]).epsilon(1e-15));
}

TEST_CASE("conv2d center one-hot 3x3 kernel with pad 1 is the identity") {
  SplitMix64 rng{2};
  const Tensor input = random_tensor(rng, {3, 6, 6}, -2.0, 2.0);
  Conv2dParams p = Conv2dParams::make(3, 3, 3, 1, 1);
  for (int64_t c = 0; c < 3; ++c) p.weight(c, c, 1, 1) = 1.0;
  const Tensor out = conv2d(input, p);
  CHECK(max_abs_diff(out, input) == 0.0);
}

TEST_CASE("conv2d matches the naive quadruple-loop oracle") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng{seed * 31 + 5};
    const Tensor input = random_tensor(rng, {8, 5, 5}, -10.0, 10.0);
    Conv2dParams p = Conv2dParams::make(8, 4, 3, 1, 1);
    for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.uniform(-10.0, 10.0);
    for (int64_t i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = rng.uniform(-10.0, 10.0);
    const Tensor got = conv2d(input, p);
    const Tensor want = naive_conv2d(input, p);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d strided output dims and rejection") {
  Conv2dParams p = Conv2dParams::make(1, 1, 3, 2, 1);
  const Tensor input{{1, 7, 7}, 1.0};
  const Tensor out = conv2d(input, p);
  CHECK(out.dims() == std::vector<int64_t>{1, 4, 4});
  // 6 + 2 - 3 = 5 is not divisible by stride 2
  const Tensor bad{{1, 6, 6}, 1.0};
  CHECK_THROWS_AS(conv2d(bad, p), std::invalid_argument);
  const Tensor mismatched{{2, 7, 7}, 1.0};
  CHECK_THROWS_AS(conv2d(mismatched, p), std::invalid_argument);
  CHECK_THROWS_AS(Conv2dParams::make(1, 1, 2, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d_backward zero upstream gives zero gradients") {
  SplitMix64 rng{3};
  const Tensor input = random_tensor(rng, {2, 5, 5});
  Conv2dParams p = Conv2dParams::make(2, 3, 3, 1, 1);
  for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.uniform(-1.0, 1.0);
  const Tensor grad_out{{3, 5, 5}};
  const Conv2dGrads g = conv2d_backward(input, p, grad_out);
  CHECK(g.input.sum() == 0.0);
  CHECK(g.weight.sum() == 0.0);
  CHECK(g.bias.sum() == 0.0);
}

TEST_CASE("conv2d_backward through a 1x1 identity kernel passes grad through") {
  SplitMix64 rng{4};
  const Tensor input = random_tensor(rng, {1, 4, 4});
  Conv2dParams p = Conv2dParams::make(1, 1, 1, 1, 0);
  p.weight(0, 0, 0, 0) = 1.0;
  const Tensor grad_out = random_tensor(rng, {1, 4, 4});
  const Conv2dGrads g = conv2d_backward(input, p, grad_out);
  CHECK(bit_equal(g.input, grad_out));
}

TEST_CASE("conv3d identity, scaling, and the naive 7-loop oracle") {
  SplitMix64 rng{5};
  const Tensor input = random_tensor(rng, {2, 4, 4, 4}, -2.0, 2.0);
  {
    Conv3dParams p = Conv3dParams::make(2, 2, 3, 1, 1);
    for (int64_t c = 0; c < 2; ++c) p.weight(c, c, 1, 1, 1) = 1.0;
    CHECK(max_abs_diff(conv3d(input, p), input) == 0.0);
  }
  {
    Conv3dParams p = Conv3dParams::make(2, 2, 1, 1, 0);
    for (int64_t c = 0; c < 2; ++c) p.weight(c, c, 0, 0, 0) = 2.0;
    const Tensor out = conv3d(input, p);
    for (int64_t i = 0; i < input.size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(2.0 * input.data()[i]).epsilon(1e-15));
  }
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 r{seed * 17 + 11};
    const Tensor x = random_tensor(r, {4, 4, 4, 4}, -10.0, 10.0);
    Conv3dParams p = Conv3dParams::make(4, 3, 3, 1, 1);
    for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = r.uniform(-10.0, 10.0);
    for (int64_t i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = r.uniform(-10.0, 10.0);
    CHECK(max_abs_diff(conv3d(x, p), naive_conv3d(x, p)) < 1e-12);
  }
}

TEST_CASE("relu definition and identity on positive input") {
  const Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
  const Tensor y = relu(x);
  CHECK(y(0) == 0.0);
  CHECK(y(1) == 0.0);
  CHECK(y(2) == 2.0);
  SplitMix64 rng{6};
  const Tensor pos = random_tensor(rng, {10}, 0.1, 5.0);
  CHECK(bit_equal(relu(pos), pos));
  // subgradient at exactly 0 is 0
  const Tensor g = relu_backward(x, Tensor::from_data({3}, {5.0, 5.0, 5.0}));
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 0.0);
  CHECK(g(2) == 5.0);
}

TEST_CASE("upsample2x_bilinear holds constants and clamps borders") {
  const Tensor c{{2, 3, 3}, 4.25};
  const Tensor up = upsample2x_bilinear(c);
  CHECK(up.dims() == std::vector<int64_t>{2, 6, 6});
  CHECK(up.min() == 4.25);
  CHECK(up.max() == 4.25);

  const Tensor one = Tensor::from_data({1, 1, 1}, {7.0});
  const Tensor up1 = upsample2x_bilinear(one);
  CHECK(up1.dims() == std::vector<int64_t>{1, 2, 2});
  for (int64_t i = 0; i < 4; ++i) CHECK(up1.data()[i] == 7.0);
}

TEST_CASE("upsample2x_bilinear center samples match the hand-evaluated map") {
  // Input [[0,1],[2,3]]; output centers sample at +-0.25 of the source grid.
  const Tensor x = Tensor::from_data({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  const Tensor up = upsample2x_bilinear(x);
  CHECK(up(0, 1, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(up(0, 1, 2) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(up(0, 2, 1) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(up(0, 2, 2) == doctest::Approx(2.25).epsilon(1e-15));
  // corners clamp to the nearest source pixel
  CHECK(up(0, 0, 0) == 0.0);
  CHECK(up(0, 3, 3) == 3.0);
}

TEST_CASE("repeat_z replicates slices and scales the sum") {
  SplitMix64 rng{7};
  const Tensor x = random_tensor(rng, {2, 3, 4});
  const Tensor r1 = repeat_z(x, 1);
  CHECK(r1.dims() == std::vector<int64_t>{2, 3, 4, 1});
  CHECK(r1.sum() == doctest::Approx(x.sum()).epsilon(1e-15));
  const Tensor r4 = repeat_z(x, 4);
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t j = 0; j < 4; ++j) CHECK(r4(c, i, j, 0) == r4(c, i, j, 3));
  CHECK(r4.sum() == doctest::Approx(4.0 * x.sum()).epsilon(1e-12));
}

TEST_CASE("channel_softmax symmetry, stability, and normalization") {
  const Tensor uniform{{4, 2, 2}, 3.0};
  const Tensor p = channel_softmax(uniform);
  for (int64_t i = 0; i < p.size(); ++i) CHECK(p.data()[i] == doctest::Approx(0.25).epsilon(1e-15));

  const Tensor extreme = Tensor::from_data({2, 1}, {3.0, 1003.0});
  const Tensor pe = channel_softmax(extreme);
  CHECK(pe(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pe(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pe.all_finite());

  SplitMix64 rng{8};
  const Tensor x = random_tensor(rng, {5, 3, 3}, -30.0, 30.0);
  const Tensor px = channel_softmax(x);
  for (int64_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (int64_t c = 0; c < 5; ++c) s += px.data()[c * 9 + i];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("concat_channels identity, arithmetic, and slicing") {
  SplitMix64 rng{9};
  const Tensor a = random_tensor(rng, {3, 4, 4});
  const Tensor empty{{0, 4, 4}};
  CHECK(bit_equal(concat_channels(a, empty), a));

  const Tensor b = random_tensor(rng, {5, 4, 4});
  const Tensor cat = concat_channels(a, b);
  CHECK(cat.dim(0) == 8);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t j = 0; j < 4; ++j) CHECK(cat(c, i, j) == a(c, i, j));

  const Tensor bad{{2, 5, 4}};
  CHECK_THROWS_AS(concat_channels(a, bad), std::invalid_argument);
}

TEST_CASE("nearest_upsample2x_3d doubles every axis") {
  SplitMix64 rng{10};
  const Tensor x = random_tensor(rng, {2, 2, 3, 2});
  const Tensor up = nearest_upsample2x_3d(x);
  CHECK(up.dims() == std::vector<int64_t>{2, 4, 6, 4});
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t j = 0; j < 6; ++j)
        for (int64_t k = 0; k < 4; ++k) CHECK(up(c, i, j, k) == x(c, i / 2, j / 2, k / 2));
}

TEST_CASE("kernels are deterministic: same bits across repeated runs") {
  SplitMix64 rng{11};
  const Tensor x = random_tensor(rng, {4, 8, 8});
  Conv2dParams p = Conv2dParams::make(4, 4, 3, 1, 1);
  for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.uniform(-1.0, 1.0);
  CHECK(bit_equal(conv2d(x, p), conv2d(x, p)));
  CHECK(bit_equal(upsample2x_bilinear(x), upsample2x_bilinear(x)));
  CHECK(bit_equal(channel_softmax(x), channel_softmax(x)));
}

TEST_CASE("finite outputs on finite inputs") {
  SplitMix64 rng{12};
  for (int round = 0; round < 5; ++round) {
    const Tensor x = random_tensor(rng, {3, 6, 6}, -50.0, 50.0);
    Conv2dParams p = Conv2dParams::make(3, 2, 3, 1, 1);
    for (int64_t i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.uniform(-5.0, 5.0);
    CHECK(conv2d(x, p).all_finite());
    CHECK(channel_softmax(x).all_finite());
    CHECK(upsample2x_bilinear(x).all_finite());
  }
}

TEST_CASE("gradient spot checks via the shared harness") {
  // The full 20-round suite is the acceptance gate; a few rounds here keep
  // the unit test fast while still exercising every op's backward.
  const auto reports = run_gradient_suite(/*seed=*/99, /*rounds=*/3);
  for (const auto& r : reports) {
    CAPTURE(r.op);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("gradient harness flags a broken gradient") {
  // Deliberately wrong analytic gradient: the harness must fail and name it.
  const std::vector<double> x0{0.5, -1.25, 2.0};
  const auto f = [](const std::vector<double>& x) {
    return x[0] * x[0] + 3.0 * x[1] + x[2] * x[1];
  };
  const auto good = [](const std::vector<double>& x) {
    return std::vector<double>{2.0 * x[0], 3.0 + x[2], x[1]};
  };
  const auto bad = [](const std::vector<double>& x) {
    return std::vector<double>{2.0 * x[0] + 0.5, 3.0 + x[2], x[1]};
  };
  CHECK(check_gradient("sanity_good", x0, f, good).pass);
  const GradCheckReport r = check_gradient("sanity_bad", x0, f, bad);
  CHECK_FALSE(r.pass);
  CHECK(r.op == "sanity_bad");
  CHECK(r.max_rel_err > 0.1);
}
