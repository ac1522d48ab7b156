#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gcamo/tape.hpp"
#include "gcamo/tensor.hpp"
#include "gcamo/volume.hpp"

namespace gcamo {

/// Architecture of MiniCNN3D: blocks 1-3 are conv3d -> relu -> maxpool2,
/// block 4 is conv3d -> relu and is the designated activation A, followed by
/// global average pooling and a linear head.
struct ModelSpec {
  std::size_t in_channels = 3;
  std::size_t num_classes = 6;
  std::array<std::size_t, 4> widths{8, 16, 32, 64};
  Extent3 input{64, 64, 16};

  static constexpr std::size_t kDownsample = 8;

  std::size_t feature_dim() const { return widths[3]; }
  Extent3 activation_extent(Extent3 in) const {
    return {in.x / kDownsample, in.y / kDownsample, in.z / kDownsample};
  }
  void validate() const;
};

enum class HeadInit { kRandom, kZero };

template <typename T>
class MiniCNN3D {
 public:
  // conv1.{w,b} .. conv4.{w,b}, head.{w,b}
  static constexpr std::size_t kNumParams = 10;
  static constexpr std::size_t kHeadWeight = 8;
  static constexpr std::size_t kHeadBias = 9;

  /// Node ids of one forward pass recorded on a tape.
  struct Graph {
    NodeId input = 0;
    NodeId activation = 0;  // A = block 4 output, [C',X/8,Y/8,Z/8]
    NodeId features = 0;    // global_avg_pool(A)
    NodeId logits = 0;      // pre-softmax class scores
    std::array<NodeId, kNumParams> params{};
  };

  MiniCNN3D() = default;
  /// He-uniform conv kernels, Xavier-uniform head (or zeros), zero biases.
  MiniCNN3D(ModelSpec spec, std::uint64_t seed, HeadInit head = HeadInit::kRandom);
  MiniCNN3D(ModelSpec spec, std::vector<Tensor<T>> params);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  static const char* param_name(std::size_t i);

  /// Records a forward pass. Parameters become leaves that require grad.
  Graph build(Tape<T>& tape, const Tensor<T>& volume) const;

  /// Checks channel count and divisibility by 8 of the spatial extents.
  void check_input(const Shape& volume_shape) const;

  template <typename U>
  MiniCNN3D<U> cast() const {
    std::vector<Tensor<U>> p;
    for (const auto& t : params_) p.push_back(t.template cast<U>());
    return MiniCNN3D<U>(spec_, std::move(p));
  }

 private:
  ModelSpec spec_;
  std::vector<Tensor<T>> params_;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  Tensor<T> activation;
};

/// Inference-only forward pass.
template <typename T>
ForwardResult<T> forward(const MiniCNN3D<T>& model, const Tensor<T>& volume);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;

  double probability() const { return probabilities.at(label); }
};

/// Argmax of softmax(logits); ties go to the lowest class index.
Prediction predict_from_logits(std::span<const float> logits);
Prediction predict_from_logits(std::span<const double> logits);

template <typename T>
Prediction predict(const MiniCNN3D<T>& model, const Tensor<T>& volume) {
  return predict_from_logits(forward(model, volume).logits.data());
}

/// A trained network plus the preprocessing statistics it was trained with.
struct TrainedModel {
  MiniCNN3D<float> model;
  ChannelStats stats;
};

/// Checkpoint layout: `dir/model.json` descriptor and one TBF per parameter.
void save_model(const TrainedModel& trained, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace gcamo
