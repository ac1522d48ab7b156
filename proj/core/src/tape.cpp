#include "gcamo/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gcamo/ops.hpp"

namespace gcamo {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConv3d: return "conv3d";
    case OpKind::kRelu: return "relu";
    case OpKind::kMaxPool3d: return "maxpool3d";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kLinear: return "linear";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kTrilinearResize: return "trilinear_resize";
    case OpKind::kSum: return "sum";
    case OpKind::kSelect: return "select";
    case OpKind::kScale: return "scale";
    case OpKind::kAdd: return "add";
    case OpKind::kMulConst: return "mul_const";
    case OpKind::kChannelWeightedMean: return "channel_weighted_mean";
    case OpKind::kRatio: return "ratio";
  }
  return "unknown";
}

template <typename T>
NodeId Tape<T>::push(OpKind kind, std::vector<NodeId> inputs, Tensor<T> value,
                     BackwardFn fn) {
  Node node;
  node.kind = kind;
  node.requires_grad = grad_enabled() && any_requires_grad(inputs);
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
bool Tape<T>::any_requires_grad(const std::vector<NodeId>& ids) const {
  return std::any_of(ids.begin(), ids.end(),
                     [&](NodeId id) { return nodes_.at(id).requires_grad; });
}

template <typename T>
void Tape<T>::accumulate(Grads& grads, NodeId id, const Tensor<T>& g) {
  Tensor<T>& slot = grads[id];
  if (slot.empty()) {
    slot = g;
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

template <typename T>
NodeId Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.kind = OpKind::kLeaf;
  node.requires_grad = grad_enabled() && requires_grad;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Tape<T>::conv3d(NodeId input, NodeId kernel, NodeId bias) {
  auto columns = std::make_shared<std::vector<T>>();
  Tensor<T> out = ops::conv3d_forward(value(input), value(kernel), value(bias),
                                      grad_enabled() ? columns.get() : nullptr);
  const bool need_input = requires_grad(input);
  const bool need_params = requires_grad(kernel) || requires_grad(bias);
  return push(OpKind::kConv3d, {input, kernel, bias}, std::move(out),
              [this, input, kernel, bias, columns, need_input, need_params](
                  const Tensor<T>& g, Grads& grads) {
                auto d = ops::conv3d_backward(g, value(input), value(kernel),
                                              *columns, need_input);
                if (need_input) accumulate(grads, input, d.input);
                if (need_params) {
                  accumulate(grads, kernel, d.kernel);
                  accumulate(grads, bias, d.bias);
                }
              });
}

template <typename T>
NodeId Tape<T>::relu(NodeId x) {
  return push(OpKind::kRelu, {x}, ops::relu_forward(value(x)),
              [this, x](const Tensor<T>& g, Grads& grads) {
                accumulate(grads, x, ops::relu_backward(g, value(x)));
              });
}

template <typename T>
NodeId Tape<T>::maxpool3d(NodeId x) {
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  Tensor<T> out = ops::maxpool3d_forward(value(x), argmax.get());
  return push(OpKind::kMaxPool3d, {x}, std::move(out),
              [this, x, argmax](const Tensor<T>& g, Grads& grads) {
                accumulate(grads, x,
                           ops::maxpool3d_backward(g, value(x).shape(), *argmax));
              });
}

template <typename T>
NodeId Tape<T>::global_avg_pool(NodeId x) {
  return push(OpKind::kGlobalAvgPool, {x}, ops::global_avg_pool_forward(value(x)),
              [this, x](const Tensor<T>& g, Grads& grads) {
                accumulate(grads, x,
                           ops::global_avg_pool_backward(g, value(x).shape()));
              });
}

template <typename T>
NodeId Tape<T>::linear(NodeId x, NodeId weight, NodeId bias) {
  return push(
      OpKind::kLinear, {x, weight, bias},
      ops::linear_forward(value(x), value(weight), value(bias)),
      [this, x, weight, bias](const Tensor<T>& g, Grads& grads) {
        const Tensor<T>& xv = value(x);
        const Tensor<T>& wv = value(weight);
        const std::size_t k = wv.dim(0);
        const std::size_t d = wv.dim(1);
        if (requires_grad(x)) {
          Tensor<T> dx(xv.shape());
          for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t i = 0; i < d; ++i) dx[i] += wv[r * d + i] * g[r];
          }
          accumulate(grads, x, dx);
        }
        if (requires_grad(weight)) {
          Tensor<T> dw(wv.shape());
          for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t i = 0; i < d; ++i) dw[r * d + i] = g[r] * xv[i];
          }
          accumulate(grads, weight, dw);
        }
        if (requires_grad(bias)) accumulate(grads, bias, g);
      });
}

template <typename T>
NodeId Tape<T>::softmax_cross_entropy(NodeId logits, std::size_t label) {
  const T loss = ops::softmax_cross_entropy(value(logits), label);
  return push(OpKind::kSoftmaxCrossEntropy, {logits}, Tensor<T>::scalar(loss),
              [this, logits, label](const Tensor<T>& g, Grads& grads) {
                Tensor<T> d = ops::softmax(value(logits));
                d[label] -= T{1};
                for (T& v : d.data()) v *= g[0];
                accumulate(grads, logits, d);
              });
}

template <typename T>
NodeId Tape<T>::trilinear_resize(NodeId x, Extent3 target) {
  return push(OpKind::kTrilinearResize, {x}, ops::trilinear_resize(value(x), target),
              [this, x](const Tensor<T>& g, Grads& grads) {
                accumulate(grads, x,
                           ops::trilinear_resize_backward(g, value(x).shape()));
              });
}

template <typename T>
NodeId Tape<T>::sum(NodeId x) {
  return push(OpKind::kSum, {x}, Tensor<T>::scalar(value(x).sum()),
              [this, x](const Tensor<T>& g, Grads& grads) {
                accumulate(grads, x, Tensor<T>(value(x).shape(), g[0]));
              });
}

template <typename T>
NodeId Tape<T>::select(NodeId x, std::size_t index) {
  if (index >= value(x).size()) {
    throw ValidationError("select: index " + std::to_string(index) +
                          " out of range for " + shape_to_string(value(x).shape()));
  }
  return push(OpKind::kSelect, {x}, Tensor<T>::scalar(value(x)[index]),
              [this, x, index](const Tensor<T>& g, Grads& grads) {
                Tensor<T> d(value(x).shape());
                d[index] = g[0];
                accumulate(grads, x, d);
              });
}

template <typename T>
NodeId Tape<T>::scale(NodeId x, T factor) {
  Tensor<T> out = value(x);
  for (T& v : out.data()) v *= factor;
  return push(OpKind::kScale, {x}, std::move(out),
              [x, factor](const Tensor<T>& g, Grads& grads) {
                Tensor<T> d = g;
                for (T& v : d.data()) v *= factor;
                accumulate(grads, x, d);
              });
}

template <typename T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
  if (value(a).shape() != value(b).shape()) {
    throw ShapeError("add: shape mismatch " + shape_to_string(value(a).shape()) +
                     " vs " + shape_to_string(value(b).shape()));
  }
  Tensor<T> out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += value(b)[i];
  return push(OpKind::kAdd, {a, b}, std::move(out),
              [this, a, b](const Tensor<T>& g, Grads& grads) {
                if (requires_grad(a)) accumulate(grads, a, g);
                if (requires_grad(b)) accumulate(grads, b, g);
              });
}

template <typename T>
NodeId Tape<T>::mul_const(NodeId x, Tensor<T> factor) {
  if (value(x).shape() != factor.shape()) {
    throw ShapeError("mul_const: shape mismatch " + shape_to_string(value(x).shape()) +
                     " vs " + shape_to_string(factor.shape()));
  }
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return push(OpKind::kMulConst, {x}, std::move(out),
              [x, f = std::move(factor)](const Tensor<T>& g, Grads& grads) {
                Tensor<T> d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= f[i];
                accumulate(grads, x, d);
              });
}

template <typename T>
NodeId Tape<T>::channel_weighted_mean(NodeId x, std::vector<T> weights) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4 || xv.dim(0) != weights.size()) {
    throw ShapeError("channel_weighted_mean: " + std::to_string(weights.size()) +
                     " weights for activation " + shape_to_string(xv.shape()));
  }
  const std::size_t c = xv.dim(0);
  const Extent3 e = xv.spatial();
  const std::size_t n = e.voxels();
  const T inv_c = T{1} / static_cast<T>(c);
  Tensor<T> out(Shape{e.x, e.y, e.z});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T w = weights[ch] * inv_c;
    for (std::size_t i = 0; i < n; ++i) out[i] += w * xv[ch * n + i];
  }
  return push(OpKind::kChannelWeightedMean, {x}, std::move(out),
              [this, x, w = std::move(weights), inv_c](const Tensor<T>& g,
                                                       Grads& grads) {
                const Shape& s = value(x).shape();
                const std::size_t n = g.size();
                Tensor<T> d(s);
                for (std::size_t ch = 0; ch < s[0]; ++ch) {
                  const T wc = w[ch] * inv_c;
                  for (std::size_t i = 0; i < n; ++i) d[ch * n + i] = wc * g[i];
                }
                accumulate(grads, x, d);
              });
}

template <typename T>
NodeId Tape<T>::ratio(NodeId num, NodeId den, T floor) {
  if (value(num).size() != 1 || value(den).size() != 1) {
    throw ShapeError("ratio: operands must be scalars");
  }
  const T n = value(num)[0];
  const T d = value(den)[0];
  const bool floored = d < floor;
  const T denom = floored ? floor : d;
  return push(OpKind::kRatio, {num, den}, Tensor<T>::scalar(n / denom),
              [this, num, den, n, denom, floored](const Tensor<T>& g, Grads& grads) {
                if (requires_grad(num)) {
                  accumulate(grads, num, Tensor<T>::scalar(g[0] / denom));
                }
                if (requires_grad(den)) {
                  const T dd = floored ? T{0} : -g[0] * n / (denom * denom);
                  accumulate(grads, den, Tensor<T>::scalar(dd));
                }
              });
}

template <typename T>
void Tape<T>::sweep(NodeId root, NodeId lowest, Grads& grads) const {
  if (!grad_enabled()) {
    throw ValidationError("backward called on an inference-only tape");
  }
  if (value(root).size() != 1) {
    throw ShapeError("backward requires a scalar output, got " +
                     shape_to_string(value(root).shape()));
  }
  accumulate(grads, root, Tensor<T>::scalar(T{1}));
  for (NodeId id = root + 1; id-- > lowest;) {
    const Node& node = nodes_[id];
    if (!node.backward || grads[id].empty()) continue;
    node.backward(grads[id], grads);
  }
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
  Grads local(nodes_.size());
  sweep(loss, 0, local);
  grads_.resize(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (local[id].empty()) local[id] = Tensor<T>(nodes_[id].value.shape());
    if (grads_[id].empty()) {
      grads_[id] = std::move(local[id]);
    } else {
      for (std::size_t i = 0; i < grads_[id].size(); ++i) grads_[id][i] += local[id][i];
    }
  }
}

template <typename T>
Tensor<T> Tape<T>::gradient(NodeId output, NodeId wrt) const {
  if (wrt > output) {
    throw ValidationError("gradient: node " + std::to_string(wrt) +
                          " cannot influence earlier node " + std::to_string(output));
  }
  Grads local(nodes_.size());
  sweep(output, wrt, local);
  if (local[wrt].empty()) return Tensor<T>(value(wrt).shape());
  return std::move(local[wrt]);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(NodeId id) const {
  if (id >= grads_.size() || grads_[id].empty()) {
    throw ValidationError("no gradient recorded for node " + std::to_string(id) +
                          "; call backward() first");
  }
  return grads_[id];
}

template <typename T>
void Tape<T>::zero_grad() {
  grads_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace gcamo
