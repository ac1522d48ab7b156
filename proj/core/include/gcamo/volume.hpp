#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcamo/tensor.hpp"

namespace gcamo {

/// Multi-channel volumetric image [C,X,Y,Z].
struct ZStack {
  TensorF image;
  std::vector<std::string> channel_names;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // um per voxel (x, y, z)

  std::size_t channels() const { return image.dim(0); }
  Extent3 extent() const { return image.spatial(); }
  void validate() const;
};

/// Instance label volume [X,Y,Z]; 0 is background, k > 0 a cell id.
struct SegmentationMask {
  Tensor<std::uint8_t> labels;

  Extent3 extent() const { return labels.spatial(); }
};

struct CellCrop {
  std::string cell_id;
  TensorF volume;  // [C,X,Y,Z]
  TensorF mask;    // [X,Y,Z], values in {0,1}
  int label = 0;
  std::string well;
  int site = 0;
  std::uint32_t instance = 0;
  std::size_t center_x = 0;
  std::size_t center_y = 0;
  // Set by rescale_unit for channels with max == min.
  std::vector<bool> constant_channel;

  Extent3 extent() const { return volume.spatial(); }
  void validate() const;
};

struct CropOptions {
  std::size_t crop_xy = 32;
  std::size_t min_voxels = 200;
};

struct CropStats {
  std::size_t instances = 0;
  std::size_t kept = 0;
  std::size_t dropped_small = 0;
  std::size_t dropped_boundary = 0;
};

/// One crop per sufficiently large instance, centred on the midpoint of the
/// instance's x/y bounding box (rounded down) and spanning the full z range.
/// Instances whose window leaves the stack are dropped. Crops are returned in
/// increasing instance id order.
std::vector<CellCrop> extract_crops(const ZStack& stack,
                                    const SegmentationMask& mask,
                                    const CropOptions& options,
                                    CropStats* stats = nullptr);

inline constexpr double kRescaleEpsilon = 1e-8;

/// Per-channel mean and standard deviation of rescaled training voxels.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// v <- (v - min) / (max - min + eps) per channel. Constant channels become
/// zero and are flagged in `constant_channel`.
CellCrop rescale_unit(CellCrop crop);

/// v <- (v - mean_c) / stddev_c.
CellCrop normalize(CellCrop crop, const ChannelStats& stats);

/// rescale_unit followed by normalize.
CellCrop preprocess(CellCrop crop, const ChannelStats& stats);

/// Statistics over crops that are already rescaled to [0,1].
ChannelStats compute_channel_stats(const std::vector<CellCrop>& rescaled);

/// Trilinear resize of volume and mask; the mask is re-binarised at 0.5.
CellCrop resize_crop(CellCrop crop, Extent3 target);

struct AugmentPlan {
  bool flip_x = false;
  bool flip_y = false;
  std::optional<float> brightness;  // added constant, U[0.5, 1.25]
  std::optional<float> gamma;       // exponent, U[0.5, 1.5]

  bool is_identity() const { return !flip_x && !flip_y && !brightness && !gamma; }
};

/// Independent p = 0.5 coins for each augmentation, drawn in a fixed order.
AugmentPlan sample_augment_plan(std::uint64_t seed);

/// Applies flips to volume and mask alike, then brightness, then gamma on
/// values clamped at 0. z is never flipped.
CellCrop apply_augment(CellCrop crop, const AugmentPlan& plan);

inline CellCrop augment(CellCrop crop, std::uint64_t seed) {
  return apply_augment(std::move(crop), sample_augment_plan(seed));
}

}  // namespace gcamo
