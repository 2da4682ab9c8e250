#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "esrgcnn/ops.hpp"
#include "oracles.hpp"

using namespace esrgcnn;

namespace {

ConvParams<float> delta_kernel() {
  ConvParams<float> p(1, 1);
  p.weight(0, 0, 1, 1) = 1.0f;
  return p;
}

}  // namespace

TEST(Conv2d, DeltaKernelIsIdentity) {
  const Tensor<float> x(1, 1, 3, 3, 1.0f);
  EXPECT_EQ(conv2d_forward(x, delta_kernel()), x);
}

TEST(Conv2d, BoxKernelGivesPaddedNeighbourCounts) {
  const Tensor<float> x(1, 1, 3, 3, 1.0f);
  ConvParams<float> p(1, 1);
  p.weight.fill(1.0f);
  const Tensor<float> y = conv2d_forward(x, p);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(y(0, 0, 0, 2), 4.0f);
  EXPECT_EQ(y(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0f);
  EXPECT_EQ(y(0, 0, 1, 0), 6.0f);
  EXPECT_EQ(y(0, 0, 1, 1), 9.0f);
}

TEST(Conv2d, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = oracle::random_tensor<float>({1 + static_cast<std::size_t>(trial % 2), 2, 5, 5 + static_cast<std::size_t>(trial)}, rng);
    const auto p = oracle::random_conv<float>(2, 3, rng);
    const auto got = conv2d_forward(x, p);
    const auto want = oracle::conv_direct(x, p);
    ASSERT_EQ(got.dims(), want.dims());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5) << "trial " << trial;
  }
}

TEST(Conv2d, ZeroParamsGiveBiasOnly) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor<float>({2, 4, 6, 5}, rng);
  ConvParams<float> p(4, 3);
  p.bias = {0.5f, -1.0f, 0.0f};
  const auto y = conv2d_forward(x, p);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(y(n, o, i, j), p.bias[o]);
}

TEST(Conv2d, TranslationEquivariantInInterior) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor<double>({1, 2, 8, 8}, rng);
  const auto p = oracle::random_conv<double>(2, 2, rng);
  Tensor<double> shifted(x.dims());
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t i = 1; i < 8; ++i) shifted(0, c, y, i) = x(0, c, y, i - 1);
  const auto a = conv2d_forward(x, p), b = conv2d_forward(shifted, p);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 1; y < 7; ++y)
      for (std::size_t i = 2; i < 7; ++i) EXPECT_NEAR(b(0, c, y, i), a(0, c, y, i - 1), 1e-12);
}

TEST(Conv2d, RejectsChannelMismatchAndEmptySpatial) {
  ConvParams<float> p(2, 1);
  EXPECT_THROW(conv2d_forward(Tensor<float>(1, 3, 4, 4), p), ContractViolation);
  EXPECT_THROW(conv2d_forward(Tensor<float>(1, 2, 0, 4), p), ContractViolation);
  EXPECT_THROW(conv2d_backward(Tensor<float>(1, 2, 4, 4), p, Tensor<float>(1, 1, 4, 3)), ContractViolation);
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_tensor<float>({1, 2, 4, 4}, rng);
  const auto p = oracle::random_conv<float>(2, 3, rng);
  const auto g = conv2d_backward(x, p, Tensor<float>(1, 3, 4, 4));
  for (float v : g.grad_x.vec()) EXPECT_EQ(v, 0.0f);
  for (float v : g.grad_w.vec()) EXPECT_EQ(v, 0.0f);
  for (float v : g.grad_b) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dBackward, DeltaKernelPassesGradientThrough) {
  std::mt19937_64 rng(9);
  const auto x = oracle::random_tensor<float>({1, 1, 4, 5}, rng);
  const auto g = oracle::random_tensor<float>({1, 1, 4, 5}, rng);
  EXPECT_EQ(conv2d_backward(x, delta_kernel(), g).grad_x, g);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  // loss = sum(out^2) / 2, so grad_out = out; checked in double.
  std::mt19937_64 rng(21);
  auto x = oracle::random_tensor<double>({2, 3, 5, 4}, rng);
  auto p = oracle::random_conv<double>(3, 2, rng);
  const auto out = conv2d_forward(x, p);
  const auto g = conv2d_backward(x, p, out);
  auto loss = [&] { return oracle::half_sum_sq(conv2d_forward(x, p)); };
  const double h = 1e-3;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, oracle::rel_err(g.grad_x[i], oracle::central_diff(&x[i], h, loss)));
  for (std::size_t i = 0; i < p.weight.size(); ++i)
    worst = std::max(worst, oracle::rel_err(g.grad_w[i], oracle::central_diff(&p.weight[i], h, loss)));
  for (std::size_t i = 0; i < p.bias.size(); ++i)
    worst = std::max(worst, oracle::rel_err(g.grad_b[i], oracle::central_diff(&p.bias[i], h, loss)));
  EXPECT_LE(worst, 1e-3);
}

TEST(Relu, ForwardAndBackward) {
  const Tensor<float> x(Dims{1, 1, 1, 3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  EXPECT_EQ(relu(x).vec(), (std::vector<float>{0.0f, 0.0f, 2.0f}));
  const Tensor<float> g(Dims{1, 1, 1, 3}, std::vector<float>{7.0f, 7.0f, 5.0f});
  EXPECT_EQ(relu_backward(x, g).vec(), (std::vector<float>{0.0f, 0.0f, 5.0f}));
}

TEST(Add, Elementwise) {
  std::mt19937_64 rng(1);
  const auto a = oracle::random_tensor<float>({2, 3, 4, 4}, rng);
  const auto b = oracle::random_tensor<float>({2, 3, 4, 4}, rng);
  EXPECT_EQ(add(a, Tensor<float>(a.dims())), a);
  EXPECT_EQ(add(Tensor<float>(1, 1, 2, 2, 1.0f), Tensor<float>(1, 1, 2, 2, 1.0f)), Tensor<float>(1, 1, 2, 2, 2.0f));
  const auto back = add(add(a, b), Tensor<float>(Dims{2, 3, 4, 4}, [&] {
                          auto v = b.vec();
                          for (auto& e : v) e = -e;
                          return v;
                        }()));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(back[i], a[i], 1e-6);
  EXPECT_THROW(add(a, Tensor<float>(2, 3, 4, 5)), ContractViolation);
}

TEST(ConcatSplit, DistillChannelArithmetic) {
  const auto cat = concat_channels(Tensor<float>(1, 48, 4, 4), Tensor<float>(1, 16, 4, 4));
  EXPECT_EQ(cat.dims(), (Dims{1, 64, 4, 4}));
  const auto [first, rest] = split_channels(Tensor<float>(1, 64, 4, 4), 48);
  EXPECT_EQ(first.dims(), (Dims{1, 48, 4, 4}));
  EXPECT_EQ(rest.dims(), (Dims{1, 16, 4, 4}));
}

TEST(ConcatSplit, ExactRoundTripsOnRandomShapes) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 5), ch(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d{dim(rng), ch(rng) + 1, dim(rng), dim(rng)};
    const auto x = oracle::random_tensor<float>(d, rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, d.c)(rng);
    const auto [a, b] = split_channels(x, k);
    EXPECT_EQ(a.c(), k);
    EXPECT_EQ(concat_channels(a, b), x);
    const auto a2 = oracle::random_tensor<float>({d.n, k, d.h, d.w}, rng);
    const auto [p, q] = split_channels(concat_channels(a2, x), k);
    EXPECT_EQ(p, a2);
    EXPECT_EQ(q, x);
  }
}

TEST(ConcatSplit, EdgeCasesAndErrors) {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<float>({1, 3, 2, 2}, rng);
  EXPECT_EQ(concat_channels(x, Tensor<float>(1, 0, 2, 2)), x);
  const auto [all, none] = split_channels(x, 3);
  EXPECT_EQ(all, x);
  EXPECT_EQ(none.c(), 0u);
  EXPECT_THROW(split_channels(x, 4), ContractViolation);
  EXPECT_THROW(concat_channels(x, Tensor<float>(1, 1, 2, 3)), ContractViolation);
  EXPECT_THROW(concat_channels(x, Tensor<float>(2, 1, 2, 2)), ContractViolation);
}

TEST(PixelShuffle, SmallestCaseLayout) {
  const Tensor<float> x(Dims{1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const auto y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.dims(), (Dims{1, 1, 2, 2}));
  EXPECT_EQ(y.vec(), (std::vector<float>{1, 2, 3, 4}));
}

TEST(PixelShuffle, InverseAndSumPreservedOnRandomShapes) {
  std::mt19937_64 rng(4);
  for (std::size_t r : {1u, 2u, 3u, 4u}) {
    const auto x = oracle::random_tensor<float>({2, 2 * r * r, 3, 4}, rng);
    const auto y = pixel_shuffle(x, r);
    EXPECT_EQ(y.dims(), (Dims{2, 2, 3 * r, 4 * r}));
    EXPECT_EQ(pixel_unshuffle(y, r), x);
    EXPECT_EQ(pixel_shuffle(pixel_unshuffle(y, r), r), y);
    auto sorted = [](std::vector<float> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    EXPECT_EQ(sorted(y.vec()), sorted(x.vec()));
  }
}

TEST(PixelShuffle, RejectsIndivisibleChannels) {
  EXPECT_THROW(pixel_shuffle(Tensor<float>(1, 6, 2, 2), 2), ContractViolation);
  EXPECT_THROW(pixel_shuffle(Tensor<float>(1, 4, 2, 2), 3), ContractViolation);
}

TEST(Bicubic, SameSizeIsIdentity) {
  std::mt19937_64 rng(6);
  const auto x = oracle::random_tensor<float>({1, 3, 7, 9}, rng, 0.0, 1.0);
  const auto y = bicubic_resize(x, 7, 9);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(Bicubic, ConstantStaysConstant) {
  const Tensor<float> x(1, 3, 12, 10, 0.3137f);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{6, 5}, {4, 4}, {24, 20}, {36, 30}, {1, 1}, {13, 7}}) {
    const auto y = bicubic_resize(x, h, w);
    for (float v : y.vec()) ASSERT_EQ(v, 0.3137f) << h << "x" << w;
  }
}

TEST(Bicubic, RampDownThenUpMatchesDirectOracle) {
  Tensor<double> ramp(1, 1, 24, 24);
  for (std::size_t y = 0; y < 24; ++y)
    for (std::size_t x = 0; x < 24; ++x) ramp(0, 0, y, x) = 0.02 * static_cast<double>(x) + 0.01 * static_cast<double>(y);
  const auto down = bicubic_resize(ramp, 8, 8);
  const auto down_ref = oracle::bicubic_direct(ramp, 8, 8);
  for (std::size_t i = 0; i < down.size(); ++i) EXPECT_NEAR(down[i], down_ref[i], 1e-10);
  const auto up = bicubic_resize(down, 24, 24);
  const auto up_ref = oracle::bicubic_direct(down_ref, 24, 24);
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up[i], up_ref[i], 1e-4);
}

TEST(Bicubic, RandomScalesMatchDirectOracle) {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_tensor<double>({1, 2, 11, 13}, rng);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 6}, {3, 4}, {22, 26}, {33, 17}}) {
    const auto got = bicubic_resize(x, h, w);
    const auto want = oracle::bicubic_direct(x, h, w);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  }
}
