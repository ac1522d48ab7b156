#include <gtest/gtest.h>

#include "gcamo/error.hpp"
#include "gcamo/volume.hpp"
#include "test_util.hpp"

namespace gcamo {
namespace {

ZStack ramp_stack(Extent3 e, std::size_t channels) {
  ZStack s;
  s.image = TensorF(Shape{channels, e.x, e.y, e.z});
  for (std::size_t i = 0; i < s.image.size(); ++i) s.image[i] = static_cast<float>(i % 997);
  return s;
}

void paint_box(SegmentationMask& m, std::uint8_t id, std::size_t x0, std::size_t x1,
               std::size_t y0, std::size_t y1, std::size_t z0, std::size_t z1) {
  for (std::size_t x = x0; x <= x1; ++x)
    for (std::size_t y = y0; y <= y1; ++y)
      for (std::size_t z = z0; z <= z1; ++z) m.labels.at(x, y, z) = id;
}

TEST(ExtractCrops, CentreRuleBoundaryAndSizeFilters) {
  const Extent3 e{64, 64, 8};
  const ZStack stack = ramp_stack(e, 2);
  SegmentationMask mask{Tensor<std::uint8_t>(Shape{e.x, e.y, e.z})};
  paint_box(mask, 1, 20, 31, 30, 40, 0, 7);  // centre (25, 35)
  paint_box(mask, 2, 0, 9, 0, 9, 0, 7);      // window leaves the stack
  paint_box(mask, 3, 50, 51, 50, 51, 0, 1);  // 8 voxels
  paint_box(mask, 4, 33, 36, 30, 33, 0, 7);  // neighbour inside cell 1's window

  CropStats stats;
  const auto crops = extract_crops(stack, mask, {16, 50}, &stats);
  EXPECT_EQ(stats.instances, 4u);
  EXPECT_EQ(stats.dropped_boundary, 1u);
  EXPECT_EQ(stats.dropped_small, 1u);
  EXPECT_EQ(stats.kept, 2u);
  ASSERT_EQ(crops.size(), 2u);
  EXPECT_LE(crops.size(), stats.instances);

  const CellCrop& c = crops[0];
  EXPECT_EQ(c.cell_id, "1");
  EXPECT_EQ(c.center_x, 25u);
  EXPECT_EQ(c.center_y, 35u);
  EXPECT_EQ(c.volume.shape(), (Shape{2, 16, 16, 8}));
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t x = 0; x < 16; ++x)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t z = 0; z < 8; ++z)
          ASSERT_EQ(c.volume.at(ch, x, y, z), stack.image.at(ch, 17 + x, 27 + y, z));
  // The mask holds this instance only, as 0/1.
  double inside = 0.0;
  for (std::size_t x = 0; x < 16; ++x)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t z = 0; z < 8; ++z) {
        const bool want = mask.labels.at(17 + x, 27 + y, z) == 1;
        ASSERT_EQ(c.mask.at(x, y, z), want ? 1.0f : 0.0f);
        inside += c.mask.at(x, y, z);
      }
  EXPECT_GT(inside, 0.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(ExtractCrops, ShapeMismatchIsAnError) {
  const ZStack stack = ramp_stack({16, 16, 4}, 1);
  SegmentationMask mask{Tensor<std::uint8_t>(Shape{16, 16, 5})};
  EXPECT_THROW(extract_crops(stack, mask, {8, 1}), ShapeError);
  SegmentationMask ok{Tensor<std::uint8_t>(Shape{16, 16, 4})};
  EXPECT_THROW(extract_crops(stack, ok, {32, 1}), ValidationError);
}

CellCrop one_channel_crop(std::vector<float> values) {
  CellCrop c;
  const std::size_t n = values.size();
  c.volume = TensorF(Shape{1, n, 1, 1}, std::move(values));
  c.mask = TensorF(Shape{n, 1, 1}, 1.0f);
  return c;
}

TEST(Preprocess, RescaleThenNormalizeWithTrainingStats) {
  const CellCrop c = one_channel_crop({10.0f, 12.5f, 20.0f});
  const CellCrop p = preprocess(c, {{0.5}, {0.25}});
  EXPECT_FLOAT_EQ(p.volume[0], -2.0f);
  EXPECT_FLOAT_EQ(p.volume[1], -1.0f);
  EXPECT_FLOAT_EQ(p.volume[2], 2.0f);
}

TEST(Preprocess, ConstantChannelBecomesZeroAndIsFlagged) {
  const CellCrop r = rescale_unit(one_channel_crop({3.0f, 3.0f, 3.0f}));
  EXPECT_EQ(r.constant_channel, std::vector<bool>{true});
  for (float v : r.volume.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Preprocess, ChannelStatsOverRescaledCrops) {
  std::vector<CellCrop> crops{one_channel_crop({0.0f, 1.0f}), one_channel_crop({0.0f, 1.0f})};
  const ChannelStats s = compute_channel_stats(crops);
  EXPECT_DOUBLE_EQ(s.mean[0], 0.5);
  EXPECT_DOUBLE_EQ(s.stddev[0], 0.5);
  EXPECT_THROW(compute_channel_stats({}), ValidationError);
  EXPECT_THROW(normalize(crops[0], {{0.0, 0.0}, {1.0, 1.0}}), ValidationError);
}

CellCrop random_crop(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CellCrop c;
  c.volume = testing::random_tensor<float>({2, 6, 5, 4}, rng, 0.0, 1.0);
  c.mask = TensorF(Shape{6, 5, 4});
  for (std::size_t i = 0; i < c.mask.size(); ++i) c.mask[i] = (rng() % 3 == 0) ? 1.0f : 0.0f;
  return c;
}

TEST(Augment, FlipTwiceIsIdentity) {
  const CellCrop c = random_crop(1);
  AugmentPlan flip;
  flip.flip_x = true;
  flip.flip_y = true;
  const CellCrop once = apply_augment(c, flip);
  EXPECT_NE(once.volume, c.volume);
  const CellCrop twice = apply_augment(once, flip);
  EXPECT_EQ(twice.volume, c.volume);
  EXPECT_EQ(twice.mask, c.mask);
}

TEST(Augment, MaskAndVolumeFlipTogetherAndZIsNeverFlipped) {
  const CellCrop c = random_crop(2);
  AugmentPlan flip;
  flip.flip_x = true;
  const CellCrop f = apply_augment(c, flip);
  for (std::size_t x = 0; x < 6; ++x)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t z = 0; z < 4; ++z) {
        EXPECT_EQ(f.mask.at(x, y, z), c.mask.at(5 - x, y, z));
        EXPECT_EQ(f.volume.at(1, x, y, z), c.volume.at(1, 5 - x, y, z));
      }
}

TEST(Augment, GammaOneIsIdentityAndBrightnessAdds) {
  const CellCrop c = random_crop(3);
  AugmentPlan g;
  g.gamma = 1.0f;
  EXPECT_EQ(apply_augment(c, g).volume, c.volume);
  AugmentPlan b;
  b.brightness = 0.75f;
  const CellCrop bright = apply_augment(c, b);
  for (std::size_t i = 0; i < c.volume.size(); ++i) EXPECT_EQ(bright.volume[i], c.volume[i] + 0.75f);
  EXPECT_EQ(bright.mask, c.mask);
}

TEST(Augment, GammaClampsNegativesToZero) {
  CellCrop c = one_channel_crop({-1.0f, 0.25f});
  AugmentPlan g;
  g.gamma = 0.5f;
  const CellCrop out = apply_augment(c, g);
  EXPECT_EQ(out.volume[0], 0.0f);
  EXPECT_FLOAT_EQ(out.volume[1], 0.5f);
}

TEST(Augment, PlansAreReproducibleAndInRange) {
  int flips = 0, bright = 0, gammas = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const AugmentPlan a = sample_augment_plan(s);
    const AugmentPlan b = sample_augment_plan(s);
    ASSERT_EQ(a.flip_x, b.flip_x);
    ASSERT_EQ(a.brightness, b.brightness);
    ASSERT_EQ(a.gamma, b.gamma);
    flips += a.flip_x;
    if (a.brightness) {
      ++bright;
      ASSERT_GE(*a.brightness, 0.5f);
      ASSERT_LE(*a.brightness, 1.25f);
    }
    if (a.gamma) {
      ++gammas;
      ASSERT_GE(*a.gamma, 0.5f);
      ASSERT_LE(*a.gamma, 1.5f);
    }
  }
  // Fair coins: 1000 +/- ~5 sigma.
  EXPECT_NEAR(flips, 1000, 120);
  EXPECT_NEAR(bright, 1000, 120);
  EXPECT_NEAR(gammas, 1000, 120);
  const CellCrop c = random_crop(4);
  EXPECT_EQ(augment(c, 99).volume, augment(c, 99).volume);
}

TEST(ResizeCrop, MaskIsRebinarised) {
  CellCrop c = random_crop(5);
  const CellCrop r = resize_crop(c, {12, 10, 8});
  EXPECT_EQ(r.volume.shape(), (Shape{2, 12, 10, 8}));
  for (float v : r.mask.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  EXPECT_EQ(resize_crop(c, c.extent()).volume, c.volume);
}

}  // namespace
}  // namespace gcamo
