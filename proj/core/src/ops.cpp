#include "gcamo/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace gcamo {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_volume(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw ShapeError(std::string(what) + ": expected [C,X,Y,Z], got " +
                     shape_to_string(s));
  }
}

// Visits every (row, source offset, destination column) segment of the
// im2col matrix. `fn(row, src_offset, col_offset, length)` copies a run of
// contiguous z positions.
template <typename Fn>
void for_each_column_run(const Shape& in_shape, Fn&& fn) {
  const std::size_t c_in = in_shape[0];
  const auto nx = static_cast<std::ptrdiff_t>(in_shape[1]);
  const auto ny = static_cast<std::ptrdiff_t>(in_shape[2]);
  const auto nz = static_cast<std::ptrdiff_t>(in_shape[3]);
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    for (std::ptrdiff_t dx = 0; dx < 3; ++dx) {
      for (std::ptrdiff_t dy = 0; dy < 3; ++dy) {
        for (std::ptrdiff_t dz = 0; dz < 3; ++dz) {
          const std::size_t row = ci * kTaps + static_cast<std::size_t>(dx * 9 + dy * 3 + dz);
          const std::ptrdiff_t z_begin = std::max<std::ptrdiff_t>(0, 1 - dz);
          const std::ptrdiff_t z_end = std::min<std::ptrdiff_t>(nz, nz + 1 - dz);
          if (z_end <= z_begin) continue;
          for (std::ptrdiff_t x = 0; x < nx; ++x) {
            const std::ptrdiff_t sx = x + dx - 1;
            if (sx < 0 || sx >= nx) continue;
            for (std::ptrdiff_t y = 0; y < ny; ++y) {
              const std::ptrdiff_t sy = y + dy - 1;
              if (sy < 0 || sy >= ny) continue;
              const std::size_t src =
                  ((ci * static_cast<std::size_t>(nx) + static_cast<std::size_t>(sx)) *
                       static_cast<std::size_t>(ny) +
                   static_cast<std::size_t>(sy)) *
                      static_cast<std::size_t>(nz) +
                  static_cast<std::size_t>(z_begin + dz - 1);
              const std::size_t col =
                  (static_cast<std::size_t>(x) * static_cast<std::size_t>(ny) +
                   static_cast<std::size_t>(y)) *
                      static_cast<std::size_t>(nz) +
                  static_cast<std::size_t>(z_begin);
              fn(row, src, col, static_cast<std::size_t>(z_end - z_begin));
            }
          }
        }
      }
    }
  }
}

struct AxisSample {
  std::size_t i0;
  std::size_t i1;
  double t;
};

std::vector<AxisSample> axis_table(std::size_t src_n, std::size_t dst_n) {
  std::vector<AxisSample> table(dst_n);
  const double scale = static_cast<double>(src_n) / static_cast<double>(dst_n);
  const double hi = static_cast<double>(src_n - 1);
  for (std::size_t d = 0; d < dst_n; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, hi);
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src_n - 1);
    table[d] = {i0, i1, s - static_cast<double>(i0)};
  }
  return table;
}

// Splits a rank-3/rank-4 shape into (channels, extents).
std::pair<std::size_t, Extent3> split_volume(const Shape& s) {
  if (s.size() == 4) return {s[0], {s[1], s[2], s[3]}};
  if (s.size() == 3) return {1, {s[0], s[1], s[2]}};
  throw ShapeError("trilinear_resize: expected rank-3 or rank-4 volume, got " +
                   shape_to_string(s));
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias, std::vector<T>* columns) {
  require_volume(input.shape(), "conv3d input");
  const Shape& ks = kernel.shape();
  if (ks.size() != 5 || ks[2] != 3 || ks[3] != 3 || ks[4] != 3) {
    throw ShapeError("conv3d: kernel must be [C_out,C_in,3,3,3], got " +
                     shape_to_string(ks));
  }
  if (ks[1] != input.dim(0)) {
    throw ShapeError("conv3d: kernel expects " + std::to_string(ks[1]) +
                     " input channels, input has " + std::to_string(input.dim(0)));
  }
  if (bias.rank() != 1 || bias.dim(0) != ks[0]) {
    throw ShapeError("conv3d: bias must be [C_out], got " +
                     shape_to_string(bias.shape()));
  }
  const std::size_t c_out = ks[0];
  const std::size_t rows = ks[1] * kTaps;
  const Extent3 e = input.spatial();
  const std::size_t n = e.voxels();

  std::vector<T> local;
  std::vector<T>& col = columns ? *columns : local;
  col.assign(rows * n, T{0});
  const T* src = input.data().data();
  for_each_column_run(input.shape(), [&](std::size_t row, std::size_t s,
                                         std::size_t c, std::size_t len) {
    std::copy_n(src + s, len, col.data() + row * n + c);
  });

  Tensor<T> out(Shape{c_out, e.x, e.y, e.z});
  MapMat<T> out_m(out.data().data(), static_cast<Eigen::Index>(c_out),
                  static_cast<Eigen::Index>(n));
  ConstMapMat<T> k_m(kernel.data().data(), static_cast<Eigen::Index>(c_out),
                     static_cast<Eigen::Index>(rows));
  ConstMapMat<T> col_m(col.data(), static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(n));
  out_m.noalias() = k_m * col_m;
  for (std::size_t co = 0; co < c_out; ++co) {
    out_m.row(static_cast<Eigen::Index>(co)).array() += bias[co];
  }
  return out;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor<T>& grad_out,
                               const Tensor<T>& input, const Tensor<T>& kernel,
                               const std::vector<T>& columns,
                               bool need_input_grad) {
  const std::size_t c_out = kernel.dim(0);
  const std::size_t rows = kernel.dim(1) * kTaps;
  const std::size_t n = input.spatial().voxels();
  const auto ec_out = static_cast<Eigen::Index>(c_out);
  const auto erows = static_cast<Eigen::Index>(rows);
  const auto en = static_cast<Eigen::Index>(n);

  ConstMapMat<T> g_m(grad_out.data().data(), ec_out, en);
  ConstMapMat<T> col_m(columns.data(), erows, en);

  Conv3dGrads<T> grads;
  grads.kernel = Tensor<T>(kernel.shape());
  MapMat<T> dk(grads.kernel.data().data(), ec_out, erows);
  dk.noalias() = g_m * col_m.transpose();

  grads.bias = Tensor<T>(Shape{c_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    grads.bias[co] = g_m.row(static_cast<Eigen::Index>(co)).sum();
  }

  if (need_input_grad) {
    ConstMapMat<T> k_m(kernel.data().data(), ec_out, erows);
    RowMat<T> dcol = k_m.transpose() * g_m;
    grads.input = Tensor<T>(input.shape());
    T* dst = grads.input.data().data();
    const T* dc = dcol.data();
    for_each_column_run(input.shape(), [&](std::size_t row, std::size_t s,
                                           std::size_t c, std::size_t len) {
      const T* from = dc + row * n + c;
      for (std::size_t i = 0; i < len; ++i) dst[s + i] += from[i];
    });
  }
  return grads;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x) {
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  }
  return g;
}

template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x,
                            std::vector<std::size_t>* argmax) {
  require_volume(x.shape(), "maxpool3d");
  const std::size_t c = x.dim(0);
  const Extent3 e = x.spatial();
  if (e.x % 2 || e.y % 2 || e.z % 2) {
    throw ShapeError("maxpool3d: spatial extents must be even, got " +
                     shape_to_string(x.shape()));
  }
  Tensor<T> out(Shape{c, e.x / 2, e.y / 2, e.z / 2});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ox = 0; ox < e.x / 2; ++ox) {
      for (std::size_t oy = 0; oy < e.y / 2; ++oy) {
        for (std::size_t oz = 0; oz < e.z / 2; ++oz, ++o) {
          // Window positions in increasing linear order, so a strict '>'
          // keeps the lowest index on ties.
          std::size_t best = x.index(ch, 2 * ox, 2 * oy, 2 * oz);
          T best_v = x[best];
          for (std::size_t dx = 0; dx < 2; ++dx) {
            for (std::size_t dy = 0; dy < 2; ++dy) {
              for (std::size_t dz = 0; dz < 2; ++dz) {
                const std::size_t i =
                    x.index(ch, 2 * ox + dx, 2 * oy + dy, 2 * oz + dz);
                if (x[i] > best_v) {
                  best_v = x[i];
                  best = i;
                }
              }
            }
          }
          out[o] = best_v;
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const Shape& in_shape,
                             const std::vector<std::size_t>& argmax) {
  Tensor<T> g(in_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  require_volume(x.shape(), "global_avg_pool");
  const std::size_t c = x.dim(0);
  const std::size_t n = x.spatial().voxels();
  Tensor<T> out(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += x[ch * n + i];
    out[ch] = acc / static_cast<T>(n);
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out,
                                   const Shape& in_shape) {
  Tensor<T> g(in_shape);
  const std::size_t n = shape_product(in_shape) / in_shape[0];
  for (std::size_t ch = 0; ch < in_shape[0]; ++ch) {
    const T v = grad_out[ch] / static_cast<T>(n);
    std::fill_n(g.data().begin() + static_cast<std::ptrdiff_t>(ch * n), n, v);
  }
  return g;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight,
                         const Tensor<T>& bias) {
  if (x.rank() != 1 || weight.rank() != 2 || bias.rank() != 1 ||
      weight.dim(1) != x.dim(0) || bias.dim(0) != weight.dim(0)) {
    throw ShapeError("linear: incompatible shapes x" + shape_to_string(x.shape()) +
                     " W" + shape_to_string(weight.shape()) + " b" +
                     shape_to_string(bias.shape()));
  }
  const std::size_t k = weight.dim(0);
  const std::size_t d = weight.dim(1);
  Tensor<T> out(Shape{k});
  for (std::size_t r = 0; r < k; ++r) {
    T acc = bias[r];
    for (std::size_t i = 0; i < d; ++i) acc += weight[r * d + i] * x[i];
    out[r] = acc;
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const T m = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor<T> p(logits.shape());
  T z{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (T& v : p.data()) v /= z;
  return p;
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ValidationError("softmax_cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(logits.size()) +
                          " classes");
  }
  const T m = *std::max_element(logits.data().begin(), logits.data().end());
  T z{0};
  for (T v : logits.data()) z += std::exp(v - m);
  return std::log(z) + m - logits[label];
}

template <typename T>
Tensor<T> trilinear_resize(const Tensor<T>& x, Extent3 target) {
  if (target.x == 0 || target.y == 0 || target.z == 0) {
    throw ShapeError("trilinear_resize: target extents must be >= 1");
  }
  const auto [channels, src] = split_volume(x.shape());
  if (src == target) return x;
  const auto tx = axis_table(src.x, target.x);
  const auto ty = axis_table(src.y, target.y);
  const auto tz = axis_table(src.z, target.z);
  Shape out_shape = x.rank() == 4 ? Shape{channels, target.x, target.y, target.z}
                                  : Shape{target.x, target.y, target.z};
  Tensor<T> out(out_shape);
  const std::size_t src_n = src.voxels();
  const std::size_t syz = src.y * src.z;
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* v = x.data().data() + c * src_n;
    for (const auto& ax : tx) {
      const T wx = static_cast<T>(ax.t);
      for (const auto& ay : ty) {
        const T wy = static_cast<T>(ay.t);
        for (const auto& az : tz) {
          const T wz = static_cast<T>(az.t);
          auto at = [&](std::size_t i, std::size_t j, std::size_t k) {
            return v[i * syz + j * src.z + k];
          };
          // a + t * (b - a) keeps constant fields exact.
          auto lerp = [](T a, T b, T t) { return a + t * (b - a); };
          const T c00 = lerp(at(ax.i0, ay.i0, az.i0), at(ax.i0, ay.i0, az.i1), wz);
          const T c01 = lerp(at(ax.i0, ay.i1, az.i0), at(ax.i0, ay.i1, az.i1), wz);
          const T c10 = lerp(at(ax.i1, ay.i0, az.i0), at(ax.i1, ay.i0, az.i1), wz);
          const T c11 = lerp(at(ax.i1, ay.i1, az.i0), at(ax.i1, ay.i1, az.i1), wz);
          out[o++] = lerp(lerp(c00, c01, wy), lerp(c10, c11, wy), wx);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> trilinear_resize_backward(const Tensor<T>& grad_out,
                                    const Shape& in_shape) {
  const auto [channels, src] = split_volume(in_shape);
  const Extent3 dst = grad_out.spatial();
  if (src == dst) return grad_out.reshaped(in_shape);
  const auto tx = axis_table(src.x, dst.x);
  const auto ty = axis_table(src.y, dst.y);
  const auto tz = axis_table(src.z, dst.z);
  Tensor<T> g(in_shape);
  const std::size_t src_n = src.voxels();
  const std::size_t syz = src.y * src.z;
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* v = g.data().data() + c * src_n;
    for (const auto& ax : tx) {
      const T wx1 = static_cast<T>(ax.t);
      const T wx0 = T{1} - wx1;
      for (const auto& ay : ty) {
        const T wy1 = static_cast<T>(ay.t);
        const T wy0 = T{1} - wy1;
        for (const auto& az : tz) {
          const T wz1 = static_cast<T>(az.t);
          const T wz0 = T{1} - wz1;
          const T go = grad_out[o++];
          auto add = [&](std::size_t i, std::size_t j, std::size_t k, T w) {
            v[i * syz + j * src.z + k] += w * go;
          };
          add(ax.i0, ay.i0, az.i0, wx0 * wy0 * wz0);
          add(ax.i0, ay.i0, az.i1, wx0 * wy0 * wz1);
          add(ax.i0, ay.i1, az.i0, wx0 * wy1 * wz0);
          add(ax.i0, ay.i1, az.i1, wx0 * wy1 * wz1);
          add(ax.i1, ay.i0, az.i0, wx1 * wy0 * wz0);
          add(ax.i1, ay.i0, az.i1, wx1 * wy0 * wz1);
          add(ax.i1, ay.i1, az.i0, wx1 * wy1 * wz0);
          add(ax.i1, ay.i1, az.i1, wx1 * wy1 * wz1);
        }
      }
    }
  }
  return g;
}

#define GCAMO_INSTANTIATE_OPS(T)                                                \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&,         \
                                    const Tensor<T>&, std::vector<T>*);         \
  template Conv3dGrads<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&,   \
                                          const Tensor<T>&,                     \
                                          const std::vector<T>&, bool);         \
  template Tensor<T> relu_forward(const Tensor<T>&);                            \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> maxpool3d_forward(const Tensor<T>&,                        \
                                       std::vector<std::size_t>*);              \
  template Tensor<T> maxpool3d_backward(const Tensor<T>&, const Shape&,         \
                                        const std::vector<std::size_t>&);       \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                 \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Shape&);  \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&,         \
                                    const Tensor<T>&);                          \
  template Tensor<T> softmax(const Tensor<T>&);                                 \
  template T softmax_cross_entropy(const Tensor<T>&, std::size_t);              \
  template Tensor<T> trilinear_resize(const Tensor<T>&, Extent3);               \
  template Tensor<T> trilinear_resize_backward(const Tensor<T>&, const Shape&);

GCAMO_INSTANTIATE_OPS(float)
GCAMO_INSTANTIATE_OPS(double)

#undef GCAMO_INSTANTIATE_OPS

}  // namespace ops
}  // namespace gcamo
