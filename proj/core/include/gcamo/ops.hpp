#pragma once

#include <cstddef>
#include <vector>

#include "gcamo/tensor.hpp"

// Raw forward/backward kernels. These are stateless; Tape wires them into a
// differentiable graph. Volumes are [C,X,Y,Z].
namespace gcamo::ops {

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kTaps = kKernel * kKernel * kKernel;

/// 3x3x3 cross-correlation, stride 1, zero padding 1.
/// `columns` receives the im2col matrix [C_in*27, X*Y*Z] used by backward.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias, std::vector<T>* columns);

template <typename T>
struct Conv3dGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& grad_out,
                               const Tensor<T>& input, const Tensor<T>& kernel,
                               const std::vector<T>& columns,
                               bool need_input_grad);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// Gradient passes where x > 0; the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x);

/// 2x2x2 max pool. `argmax` holds the source linear index of every output.
/// Ties go to the lowest linear index.
template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x, std::vector<std::size_t>* argmax);

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const Shape& in_shape,
                             const std::vector<std::size_t>& argmax);

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out,
                                   const Shape& in_shape);

/// y = W x + b with x:[d], W:[K,d], b:[K].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight,
                         const Tensor<T>& bias);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// -log softmax(logits)[label], max-subtracted.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::size_t label);

/// Resamples the spatial axes of a rank-3 or rank-4 volume with half-pixel
/// centres, src = (dst + 0.5) * (src_extent / dst_extent) - 0.5, clamped to
/// the source borders.
template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& x, Extent3 target);

/// Adjoint of trilinear_resize: scatters grad_out back onto the source grid.
template <typename T>
Tensor<T> trilinear_resize_backward(const Tensor<T>& grad_out,
                                    const Shape& in_shape);

}  // namespace gcamo::ops
