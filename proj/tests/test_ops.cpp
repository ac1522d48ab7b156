#include <gtest/gtest.h>

#include <random>

#include "gcamo/error.hpp"
#include "gcamo/ops.hpp"
#include "test_util.hpp"

namespace gcamo {
namespace {

using testing::random_tensor;

// Direct 7-loop cross-correlation used as the reference.
TensorD naive_conv(const TensorD& in, const TensorD& k, const TensorD& b) {
  const std::size_t ci = in.dim(0), co = k.dim(0);
  const Extent3 e = in.spatial();
  TensorD out(Shape{co, e.x, e.y, e.z});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t x = 0; x < e.x; ++x)
      for (std::size_t y = 0; y < e.y; ++y)
        for (std::size_t z = 0; z < e.z; ++z) {
          double acc = b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (int dx = -1; dx <= 1; ++dx)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                  const long sx = long(x) + dx, sy = long(y) + dy, sz = long(z) + dz;
                  if (sx < 0 || sy < 0 || sz < 0 || sx >= long(e.x) || sy >= long(e.y) ||
                      sz >= long(e.z))
                    continue;
                  const std::size_t ki = (((o * ci + c) * 3 + (dx + 1)) * 3 + (dy + 1)) * 3 + (dz + 1);
                  acc += k[ki] * in.at(c, sx, sy, sz);
                }
          out.at(o, x, y, z) = acc;
        }
  return out;
}

TEST(Conv3d, MatchesDirectLoop) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ci = 1 + trial % 3, co = 1 + (trial * 7) % 4;
    const Shape s{ci, 3 + trial % 4, 2 + trial % 3, 1 + trial % 5};
    const auto in = random_tensor(s, rng);
    const auto k = random_tensor({co, ci, 3, 3, 3}, rng);
    const auto b = random_tensor({co}, rng);
    const auto got = ops::conv3d_forward<double>(in, k, b, nullptr);
    const auto want = naive_conv(in, k, b);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv3d, RejectsMismatchedKernel) {
  TensorD in(Shape{2, 4, 4, 4});
  TensorD k(Shape{3, 1, 3, 3, 3});
  TensorD b(Shape{3});
  EXPECT_THROW(ops::conv3d_forward<double>(in, k, b, nullptr), ShapeError);
}

TEST(Relu, SubgradientAtZeroIsZero) {
  TensorD x(Shape{4}, std::vector<double>{-1.0, 0.0, 2.0, -0.0});
  TensorD g(Shape{4}, 1.0);
  const auto y = ops::relu_forward(x);
  EXPECT_EQ(y.storage(), (std::vector<double>{0.0, 0.0, 2.0, 0.0}));
  EXPECT_EQ(ops::relu_backward(g, x).storage(), (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(MaxPool, TiesGoToLowestIndex) {
  TensorD x(Shape{1, 2, 2, 2}, 3.0);
  std::vector<std::size_t> argmax;
  const auto y = ops::maxpool3d_forward(x, &argmax);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(argmax[0], 0u);
  const auto g = ops::maxpool3d_backward(TensorD(Shape{1, 1, 1, 1}, 1.0), x.shape(), argmax);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g.sum(), 1.0);
}

TEST(MaxPool, PicksBlockMaximum) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({2, 4, 4, 2}, rng);
  std::vector<std::size_t> argmax;
  const auto y = ops::maxpool3d_forward(x, &argmax);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 2, 1}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double m = -1e9;
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dz = 0; dz < 2; ++dz) m = std::max(m, x.at(c, 2 * i + dx, 2 * j + dy, dz));
        EXPECT_EQ(y.at(c, i, j, 0), m);
      }
}

TEST(MaxPool, OddExtentIsAnError) {
  EXPECT_THROW(ops::maxpool3d_forward(TensorD(Shape{1, 3, 2, 2}), nullptr), ShapeError);
}

TEST(GlobalAvgPool, AveragesEachChannel) {
  TensorD x(Shape{2, 1, 2, 1}, std::vector<double>{1.0, 3.0, -2.0, 4.0});
  const auto y = ops::global_avg_pool_forward(x);
  EXPECT_EQ(y.storage(), (std::vector<double>{2.0, 1.0}));
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto l = random_tensor({6}, rng, -20, 20);
    const auto p = ops::softmax(l);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    TensorD shifted = l;
    for (auto& v : shifted.storage()) v += 100.0;
    const auto q = ops::softmax(shifted);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(p[k], q[k], 1e-12);
  }
}

TEST(SoftmaxCrossEntropy, MatchesLogSoftmax) {
  TensorD l(Shape{3}, std::vector<double>{1.0, 2.0, 3.0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(ops::softmax_cross_entropy(l, 0), std::log(z) - 1.0, 1e-12);
  EXPECT_THROW(ops::softmax_cross_entropy(l, 3), ValidationError);
  // Large logits stay finite.
  TensorD big(Shape{2}, std::vector<double>{1000.0, -1000.0});
  EXPECT_NEAR(ops::softmax_cross_entropy(big, 0), 0.0, 1e-12);
  EXPECT_NEAR(ops::softmax_cross_entropy(big, 1), 2000.0, 1e-9);
}

TEST(Linear, ComputesAffineMap) {
  TensorD x(Shape{2}, std::vector<double>{1.0, -2.0});
  TensorD w(Shape{2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  TensorD b(Shape{2}, std::vector<double>{0.5, -0.5});
  EXPECT_EQ(ops::linear_forward(x, w, b).storage(), (std::vector<double>{-2.5, -5.5}));
}

TEST(Trilinear, ConstantFieldIsExact) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> ext(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = std::uniform_real_distribution<double>(-5, 5)(rng);
    const TensorD x(Shape{2, ext(rng), ext(rng), ext(rng)}, c);
    const auto y = ops::trilinear_resize(x, {ext(rng), ext(rng), ext(rng)});
    for (double v : y.storage()) ASSERT_EQ(v, c);
    const auto yf = ops::trilinear_resize(x.cast<float>(), {ext(rng), ext(rng), ext(rng)});
    for (float v : yf.storage()) ASSERT_EQ(v, static_cast<float>(c));
  }
}

TEST(Trilinear, AffineRampsAreReproducedInside) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> ext(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const Extent3 src{ext(rng), ext(rng), ext(rng)};
    const Extent3 dst{ext(rng), ext(rng), ext(rng)};
    const int axis = trial % 3;
    const double a = 0.3, b = 1.7;
    TensorD x(Shape{src.x, src.y, src.z});
    for (std::size_t i = 0; i < src.x; ++i)
      for (std::size_t j = 0; j < src.y; ++j)
        for (std::size_t k = 0; k < src.z; ++k)
          x.at(i, j, k) = a + b * static_cast<double>(axis == 0 ? i : axis == 1 ? j : k);
    const auto y = ops::trilinear_resize(x, dst);
    const std::size_t n_src = axis == 0 ? src.x : axis == 1 ? src.y : src.z;
    const std::size_t n_dst = axis == 0 ? dst.x : axis == 1 ? dst.y : dst.z;
    for (std::size_t i = 0; i < dst.x; ++i)
      for (std::size_t j = 0; j < dst.y; ++j)
        for (std::size_t k = 0; k < dst.z; ++k) {
          const std::size_t d = axis == 0 ? i : axis == 1 ? j : k;
          const double s = (d + 0.5) * static_cast<double>(n_src) / n_dst - 0.5;
          if (s < 0.0 || s > static_cast<double>(n_src - 1)) continue;  // clamped border
          ASSERT_NEAR(y.at(i, j, k), a + b * s, 1e-6);
        }
  }
}

TEST(Trilinear, IdentityTargetReturnsInput) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({3, 4, 5, 6}, rng);
  EXPECT_EQ(ops::trilinear_resize(x, x.spatial()), x);
}

TEST(Trilinear, BackwardIsTheAdjoint) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> ext(1, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape in{2, ext(rng), ext(rng), ext(rng)};
    const Extent3 dst{ext(rng), ext(rng), ext(rng)};
    const auto x = random_tensor(in, rng);
    const auto y = random_tensor({2, dst.x, dst.y, dst.z}, rng);
    const auto rx = ops::trilinear_resize(x, dst);
    const auto rty = ops::trilinear_resize_backward(y, in);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += rx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * rty[i];
    ASSERT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST(Trilinear, UpsamplingAMapKeepsItNonNegative) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor({4, 4, 2}, rng, 0.0, 1.0);
  const TensorD up = ops::trilinear_resize(x, {32, 32, 16});
  for (double v : up.data()) EXPECT_GE(v, 0.0);
}

}  // namespace
}  // namespace gcamo
