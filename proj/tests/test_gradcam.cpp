#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gcamo/error.hpp"
#include "gcamo/gradcam.hpp"
#include "gcamo/ops.hpp"
#include "test_util.hpp"

namespace gcamo {
namespace {

ModelSpec spec() { return ModelSpec{2, 4, {4, 6, 8, 12}, {16, 16, 8}}; }

TensorD random_volume(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor<double>({2, 16, 16, 8}, rng);
}

// Classical CAM for a GAP -> linear head: sum_c W[k,c] A_c.
TensorD classical_cam(const TensorD& a, const TensorD& head, std::size_t k) {
  const std::size_t c = a.dim(0), n = a.size() / c;
  TensorD cam(Shape{a.dim(1), a.dim(2), a.dim(3)});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < n; ++i) cam[i] += head[k * c + ch] * a[ch * n + i];
  return cam;
}

TensorD max_normalized(TensorD t) {
  const double m = *std::max_element(t.data().begin(), t.data().end());
  if (m > 0.0) for (auto& v : t.storage()) v /= m;
  return t;
}

TEST(GradCam, MatchesClassicalCamUpToPositiveScale) {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto model = MiniCNN3D<float>(spec(), seed).cast<double>();
    const TensorD v = random_volume(100 + seed);
    const TensorD a = forward(model, v).activation;
    const std::size_t n = a.size() / a.dim(0);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto map = gradcam_for_cell(model, v, k);
      // Weights are the head row divided by the number of positions.
      for (std::size_t c = 0; c < a.dim(0); ++c) {
        ASSERT_NEAR(map.weights[c],
                    model.params()[MiniCNN3D<double>::kHeadWeight][k * a.dim(0) + c] / n, 1e-12);
      }
      const TensorD cam = ops::relu_forward(classical_cam(a, model.params()[MiniCNN3D<double>::kHeadWeight], k));
      if (*std::max_element(cam.data().begin(), cam.data().end()) <= 0.0) continue;
      const TensorD g = max_normalized(map.coarse);
      const TensorD c = max_normalized(cam);
      double dev = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dev = std::max(dev, std::abs(g[i] - c[i]));
      EXPECT_LT(dev, 1e-5) << "seed " << seed << " class " << k;
      ++compared;
    }
  }
  EXPECT_GT(compared, 20);
}

TEST(GradCam, MapIsNonNegativeAndUpsampledToInput) {
  const MiniCNN3D<float> model(spec(), 3);
  const TensorF v = random_volume(4).cast<float>();
  const auto map = gradcam_for_cell(model, v);
  EXPECT_EQ(map.coarse.shape(), (Shape{2, 2, 1}));
  EXPECT_EQ(map.full.shape(), (Shape{16, 16, 8}));
  for (float x : map.full.data()) EXPECT_GE(x, 0.0f);
  EXPECT_EQ(map.class_index, predict(model, v).label);
  EXPECT_THROW(gradcam_for_cell(model, v, 4), ValidationError);
}

TEST(GradCam, CoarseMapIsReluOfChannelMean) {
  const TensorD a(Shape{2, 1, 1, 2}, std::vector<double>{1.0, 2.0, 3.0, -4.0});
  const TensorD g = coarse_map(a, std::vector<double>{1.0, 1.0});
  EXPECT_DOUBLE_EQ(g[0], 2.0);  // (1 + 3) / 2
  EXPECT_DOUBLE_EQ(g[1], 0.0);  // relu((2 - 4) / 2)
  EXPECT_THROW(coarse_map(a, std::vector<double>{1.0}), ShapeError);
}

TEST(GradCam, NegativeWeightsGiveDegenerateMap) {
  const TensorD a(Shape{2, 2, 2, 2}, 1.0);
  const auto map = localization_map(a, std::vector<double>{-1.0, -0.5}, {4, 4, 4});
  for (double x : map.full.data()) EXPECT_EQ(x, 0.0);
}

}  // namespace
}  // namespace gcamo
