#include "gcamo/gradcam.hpp"

#include "gcamo/ops.hpp"

namespace gcamo {

template <typename T>
std::vector<T> channel_weights(const Tape<T>& tape, NodeId activation, NodeId class_score) {
  const Tensor<T> grad = tape.gradient(class_score, activation);
  const std::size_t c = grad.dim(0);
  const std::size_t n = grad.size() / c;
  std::vector<T> w(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += grad[ch * n + i];
    w[ch] = acc / static_cast<T>(n);
  }
  return w;
}

template <typename T>
Tensor<T> coarse_map(const Tensor<T>& activation, const std::vector<T>& weights) {
  if (activation.rank() != 4 || activation.dim(0) != weights.size()) {
    throw ShapeError("coarse_map: " + std::to_string(weights.size()) +
                     " weights for activation " + shape_to_string(activation.shape()));
  }
  const std::size_t c = activation.dim(0);
  const Extent3 e = activation.spatial();
  const std::size_t n = e.voxels();
  const T inv_c = T{1} / static_cast<T>(c);
  Tensor<T> g(Shape{e.x, e.y, e.z});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T w = weights[ch] * inv_c;
    for (std::size_t i = 0; i < n; ++i) g[i] += w * activation[ch * n + i];
  }
  return ops::relu_forward(g);
}

template <typename T>
LocalizationMap<T> localization_map(const Tensor<T>& activation,
                                    const std::vector<T>& weights, Extent3 target) {
  LocalizationMap<T> map;
  map.coarse = coarse_map(activation, weights);
  map.full = ops::trilinear_resize(map.coarse, target);
  map.weights = weights;
  return map;
}

template <typename T>
LocalizationMap<T> gradcam_for_cell(const MiniCNN3D<T>& model, const Tensor<T>& volume,
                                    std::optional<std::size_t> class_override) {
  Tape<T> tape;
  const auto g = model.build(tape, volume);
  const Tensor<T>& logits = tape.value(g.logits);
  const std::size_t k =
      class_override ? *class_override : predict_from_logits(logits.data()).label;
  if (k >= logits.size()) {
    throw ValidationError("class " + std::to_string(k) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
  }
  const NodeId score = tape.select(g.logits, k);
  auto w = channel_weights(tape, g.activation, score);
  LocalizationMap<T> map = localization_map(tape.value(g.activation), w, volume.spatial());
  map.class_index = k;
  map.logits = logits;
  return map;
}

#define GCAMO_INSTANTIATE_GRADCAM(T)                                                      \
  template std::vector<T> channel_weights(const Tape<T>&, NodeId, NodeId);                \
  template Tensor<T> coarse_map(const Tensor<T>&, const std::vector<T>&);                 \
  template LocalizationMap<T> localization_map(const Tensor<T>&, const std::vector<T>&,   \
                                               Extent3);                                  \
  template LocalizationMap<T> gradcam_for_cell(const MiniCNN3D<T>&, const Tensor<T>&,     \
                                               std::optional<std::size_t>);

GCAMO_INSTANTIATE_GRADCAM(float)
GCAMO_INSTANTIATE_GRADCAM(double)

#undef GCAMO_INSTANTIATE_GRADCAM

}  // namespace gcamo
