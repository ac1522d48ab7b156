#include "gcamo/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gcamo/ops.hpp"

namespace gcamo {

void ZStack::validate() const {
  if (image.rank() != 4) {
    throw ShapeError("ZStack image must be [C,X,Y,Z], got " +
                     shape_to_string(image.shape()));
  }
  if (!channel_names.empty() && channel_names.size() != image.dim(0)) {
    throw ValidationError("ZStack has " + std::to_string(image.dim(0)) +
                          " channels but " + std::to_string(channel_names.size()) +
                          " channel names");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) throw ValidationError("ZStack voxel spacing must be positive");
  }
}

void CellCrop::validate() const {
  if (volume.rank() != 4 || mask.rank() != 3) {
    throw ShapeError("CellCrop " + cell_id + ": volume must be [C,X,Y,Z] and mask [X,Y,Z]");
  }
  if (!(volume.spatial() == mask.spatial())) {
    throw ShapeError("CellCrop " + cell_id + ": volume " + shape_to_string(volume.shape()) +
                     " and mask " + shape_to_string(mask.shape()) + " disagree");
  }
  bool any = false;
  for (float m : mask.data()) {
    if (m != 0.0f && m != 1.0f) {
      throw ValidationError("CellCrop " + cell_id + ": mask is not binary");
    }
    any = any || m == 1.0f;
  }
  if (!any) throw ValidationError("CellCrop " + cell_id + ": mask is empty");
}

std::vector<CellCrop> extract_crops(const ZStack& stack,
                                    const SegmentationMask& mask,
                                    const CropOptions& options,
                                    CropStats* stats) {
  stack.validate();
  const Extent3 e = stack.extent();
  if (!(mask.extent() == e)) {
    throw ShapeError("segmentation mask " + shape_to_string(mask.labels.shape()) +
                     " does not match stack " + shape_to_string(stack.image.shape()));
  }
  if (options.crop_xy == 0 || options.crop_xy > e.x || options.crop_xy > e.y) {
    throw ValidationError("crop size " + std::to_string(options.crop_xy) +
                          " does not fit a " + std::to_string(e.x) + "x" +
                          std::to_string(e.y) + " stack");
  }

  struct Bounds {
    std::size_t count = 0;
    std::size_t min_x = std::numeric_limits<std::size_t>::max(), max_x = 0;
    std::size_t min_y = std::numeric_limits<std::size_t>::max(), max_y = 0;
  };
  std::vector<Bounds> bounds(256);
  for (std::size_t x = 0; x < e.x; ++x) {
    for (std::size_t y = 0; y < e.y; ++y) {
      for (std::size_t z = 0; z < e.z; ++z) {
        const std::uint8_t id = mask.labels.at(x, y, z);
        if (id == 0) continue;
        Bounds& b = bounds[id];
        ++b.count;
        b.min_x = std::min(b.min_x, x);
        b.max_x = std::max(b.max_x, x);
        b.min_y = std::min(b.min_y, y);
        b.max_y = std::max(b.max_y, y);
      }
    }
  }

  CropStats local;
  std::vector<CellCrop> crops;
  const std::size_t half = options.crop_xy / 2;
  const std::size_t channels = stack.channels();
  for (std::uint32_t id = 1; id < bounds.size(); ++id) {
    const Bounds& b = bounds[id];
    if (b.count == 0) continue;
    ++local.instances;
    if (b.count < options.min_voxels) {
      ++local.dropped_small;
      continue;
    }
    const std::size_t cx = (b.min_x + b.max_x) / 2;
    const std::size_t cy = (b.min_y + b.max_y) / 2;
    if (cx < half || cy < half || cx - half + options.crop_xy > e.x ||
        cy - half + options.crop_xy > e.y) {
      ++local.dropped_boundary;
      continue;
    }
    const std::size_t x0 = cx - half;
    const std::size_t y0 = cy - half;
    CellCrop crop;
    crop.cell_id = std::to_string(id);
    crop.instance = id;
    crop.center_x = cx;
    crop.center_y = cy;
    crop.volume = TensorF(Shape{channels, options.crop_xy, options.crop_xy, e.z});
    crop.mask = TensorF(Shape{options.crop_xy, options.crop_xy, e.z});
    for (std::size_t x = 0; x < options.crop_xy; ++x) {
      for (std::size_t y = 0; y < options.crop_xy; ++y) {
        for (std::size_t z = 0; z < e.z; ++z) {
          crop.mask.at(x, y, z) = mask.labels.at(x0 + x, y0 + y, z) == id ? 1.0f : 0.0f;
        }
        for (std::size_t c = 0; c < channels; ++c) {
          const float* src = &stack.image.at(c, x0 + x, y0 + y, 0);
          std::copy_n(src, e.z, &crop.volume.at(c, x, y, 0));
        }
      }
    }
    crops.push_back(std::move(crop));
    ++local.kept;
  }
  if (stats) *stats = local;
  return crops;
}

CellCrop rescale_unit(CellCrop crop) {
  const std::size_t channels = crop.volume.dim(0);
  const std::size_t n = crop.volume.spatial().voxels();
  crop.constant_channel.assign(channels, false);
  for (std::size_t c = 0; c < channels; ++c) {
    float* v = crop.volume.data().data() + c * n;
    const auto [lo, hi] = std::minmax_element(v, v + n);
    const double min = *lo;
    const double range = static_cast<double>(*hi) - min;
    crop.constant_channel[c] = range == 0.0;
    const double denom = range + kRescaleEpsilon;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<float>((v[i] - min) / denom);
    }
  }
  return crop;
}

CellCrop normalize(CellCrop crop, const ChannelStats& stats) {
  const std::size_t channels = crop.volume.dim(0);
  if (stats.mean.size() != channels || stats.stddev.size() != channels) {
    throw ValidationError("channel statistics cover " + std::to_string(stats.mean.size()) +
                          " channels, crop has " + std::to_string(channels));
  }
  const std::size_t n = crop.volume.spatial().voxels();
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(stats.stddev[c] > 0.0)) {
      throw ValidationError("channel " + std::to_string(c) + " has non-positive stddev");
    }
    float* v = crop.volume.data().data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<float>((v[i] - stats.mean[c]) / stats.stddev[c]);
    }
  }
  return crop;
}

CellCrop preprocess(CellCrop crop, const ChannelStats& stats) {
  return normalize(rescale_unit(std::move(crop)), stats);
}

ChannelStats compute_channel_stats(const std::vector<CellCrop>& rescaled) {
  if (rescaled.empty()) throw ValidationError("channel statistics need at least one crop");
  const std::size_t channels = rescaled.front().volume.dim(0);
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  std::vector<double> count(channels, 0.0);
  for (const CellCrop& crop : rescaled) {
    if (crop.volume.dim(0) != channels) {
      throw ValidationError("crops disagree on channel count");
    }
    const std::size_t n = crop.volume.spatial().voxels();
    for (std::size_t c = 0; c < channels; ++c) {
      const float* v = crop.volume.data().data() + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        sum[c] += v[i];
        sq[c] += static_cast<double>(v[i]) * v[i];
      }
      count[c] += static_cast<double>(n);
    }
  }
  ChannelStats stats;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / count[c];
    const double var = std::max(0.0, sq[c] / count[c] - mean * mean);
    stats.mean.push_back(mean);
    stats.stddev.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return stats;
}

CellCrop resize_crop(CellCrop crop, Extent3 target) {
  if (crop.volume.spatial() == target) return crop;
  crop.volume = ops::trilinear_resize(crop.volume, target);
  TensorF m = ops::trilinear_resize(crop.mask, target);
  for (float& v : m.data()) v = v >= 0.5f ? 1.0f : 0.0f;
  crop.mask = std::move(m);
  return crop;
}

AugmentPlan sample_augment_plan(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentPlan plan;
  plan.flip_x = unit(rng) < 0.5;
  plan.flip_y = unit(rng) < 0.5;
  const bool bright = unit(rng) < 0.5;
  const double bright_value = 0.5 + 0.75 * unit(rng);
  const bool gam = unit(rng) < 0.5;
  const double gamma_value = 0.5 + unit(rng);
  if (bright) plan.brightness = static_cast<float>(bright_value);
  if (gam) plan.gamma = static_cast<float>(gamma_value);
  return plan;
}

namespace {

template <typename T>
void flip_axis(Tensor<T>& t, std::size_t axis) {
  // Works on [C,X,Y,Z] and [X,Y,Z] by folding leading axes into `outer`.
  const Shape& s = t.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  const std::size_t n = s[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  T* d = t.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* block = d + o * n * inner;
    for (std::size_t i = 0; i < n / 2; ++i) {
      std::swap_ranges(block + i * inner, block + (i + 1) * inner,
                       block + (n - 1 - i) * inner);
    }
  }
}

}  // namespace

CellCrop apply_augment(CellCrop crop, const AugmentPlan& plan) {
  const std::size_t vol_x = crop.volume.rank() - 3;
  if (plan.flip_x) {
    flip_axis(crop.volume, vol_x);
    flip_axis(crop.mask, 0);
  }
  if (plan.flip_y) {
    flip_axis(crop.volume, vol_x + 1);
    flip_axis(crop.mask, 1);
  }
  if (plan.brightness) {
    for (float& v : crop.volume.data()) v += *plan.brightness;
  }
  if (plan.gamma) {
    const float g = *plan.gamma;
    for (float& v : crop.volume.data()) v = std::pow(std::max(v, 0.0f), g);
  }
  return crop;
}

}  // namespace gcamo
