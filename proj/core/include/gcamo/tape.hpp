#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "gcamo/tensor.hpp"

namespace gcamo {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kConv3d,
  kRelu,
  kMaxPool3d,
  kGlobalAvgPool,
  kLinear,
  kSoftmaxCrossEntropy,
  kTrilinearResize,
  kSum,
  kSelect,
  kScale,
  kAdd,
  kMulConst,
  kChannelWeightedMean,
  kRatio,
};

std::string_view op_name(OpKind kind);

enum class GradMode { kEnabled, kDisabled };

/// Reverse-mode tape. Node ids are issued in creation order, so inputs always
/// precede the nodes that consume them. Every forward value is retained until
/// the tape is destroyed, which lets callers read gradients at interior nodes.
///
/// A tape is single-threaded; use one tape per worker.
template <typename T>
class Tape {
 public:
  explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  // Backward closures refer back to the tape, so it stays put.
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  bool grad_enabled() const { return mode_ == GradMode::kEnabled; }
  std::size_t size() const { return nodes_.size(); }

  NodeId leaf(Tensor<T> value, bool requires_grad = true);
  NodeId constant(Tensor<T> value) { return leaf(std::move(value), false); }

  NodeId conv3d(NodeId input, NodeId kernel, NodeId bias);
  NodeId relu(NodeId x);
  NodeId maxpool3d(NodeId x);
  NodeId global_avg_pool(NodeId x);
  NodeId linear(NodeId x, NodeId weight, NodeId bias);
  NodeId softmax_cross_entropy(NodeId logits, std::size_t label);
  NodeId trilinear_resize(NodeId x, Extent3 target);
  NodeId sum(NodeId x);
  /// Scalar holding element `index` of x.
  NodeId select(NodeId x, std::size_t index);
  NodeId scale(NodeId x, T factor);
  NodeId add(NodeId a, NodeId b);
  /// Elementwise product with a constant tensor of the same shape.
  NodeId mul_const(NodeId x, Tensor<T> factor);
  /// (1/C) * sum_c weights[c] * x[c] for x:[C,X,Y,Z] and constant weights.
  NodeId channel_weighted_mean(NodeId x, std::vector<T> weights);
  /// num / max(den, floor) for scalar nodes.
  NodeId ratio(NodeId num, NodeId den, T floor);

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Reverse sweep from a scalar node. Afterwards every node has a gradient
  /// slot of its value's shape; nodes unreachable from `loss` hold zeros.
  /// Slots accumulate across calls until zero_grad().
  void backward(NodeId loss);

  /// d(output)/d(wrt) by a partial sweep over nodes [wrt, output]. Leaves the
  /// persistent gradient slots untouched.
  Tensor<T> gradient(NodeId output, NodeId wrt) const;

  const Tensor<T>& grad(NodeId id) const;
  void zero_grad();

 private:
  using Grads = std::vector<Tensor<T>>;
  // Receives d(loss)/d(node value) and accumulates into the inputs' slots.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, Grads& grads)>;

  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value,
              BackwardFn fn);
  bool any_requires_grad(const std::vector<NodeId>& ids) const;
  void sweep(NodeId root, NodeId lowest, Grads& grads) const;
  static void accumulate(Grads& grads, NodeId id, const Tensor<T>& g);

  GradMode mode_;
  std::vector<Node> nodes_;
  Grads grads_;
};

}  // namespace gcamo
