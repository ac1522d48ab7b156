#pragma once

#include <optional>
#include <vector>

#include "gcamo/model.hpp"
#include "gcamo/tape.hpp"
#include "gcamo/tensor.hpp"

namespace gcamo {

template <typename T>
struct LocalizationMap {
  Tensor<T> coarse;  // [H,W,D], >= 0
  Tensor<T> full;    // upsampled to the crop's spatial shape, >= 0
  std::size_t class_index = 0;
  std::vector<T> weights;  // one per activation channel
  Tensor<T> logits;
};

/// w_c = mean over (x,y,z) of d(class_score)/d(A_c(x,y,z)), from one partial
/// reverse sweep. `class_score` must be a pre-softmax logit node.
template <typename T>
std::vector<T> channel_weights(const Tape<T>& tape, NodeId activation, NodeId class_score);

/// relu((1/C') * sum_c w_c A_c).
template <typename T>
Tensor<T> coarse_map(const Tensor<T>& activation, const std::vector<T>& weights);

/// Coarse map and its trilinear upsampling to `target`.
template <typename T>
LocalizationMap<T> localization_map(const Tensor<T>& activation,
                                    const std::vector<T>& weights, Extent3 target);

/// Grad-CAM for one preprocessed crop. The class defaults to the model's
/// prediction; `class_override` selects another class for error analysis.
template <typename T>
LocalizationMap<T> gradcam_for_cell(const MiniCNN3D<T>& model, const Tensor<T>& volume,
                                    std::optional<std::size_t> class_override = std::nullopt);

}  // namespace gcamo
