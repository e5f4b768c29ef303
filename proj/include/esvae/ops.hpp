// Copyright 2026 The ESVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable free functions over Tensor<Scalar>.
//
// Shapes must match exactly; the only broadcasts are scalar constants and the
// per-channel bias of add_bias/linear. Time-stacked tensors put the time axis
// outermost: a (T*B, ...) tensor holds step t of sample b at row t*B + b.

#ifndef ESVAE_OPS_HPP_
#define ESVAE_OPS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "esvae/tensor.hpp"

namespace esvae {

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& a, Index rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(a.shape()));
  }
}

template <typename Scalar>
void accumulate(const NodePtr<Scalar>& node, const Buffer<Scalar>& g) {
  if (node->requires_grad) node->grad_buffer() += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return detail::record_op<Scalar>(a.shape(), a.values() + b.values(), {&a, &b},
                                   [pa = a.node_ptr(), pb = b.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, pb, out] {
                                       detail::accumulate(pa, out->grad);
                                       detail::accumulate(pb, out->grad);
                                     };
                                   });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return detail::record_op<Scalar>(a.shape(), a.values() - b.values(), {&a, &b},
                                   [pa = a.node_ptr(), pb = b.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, pb, out] {
                                       detail::accumulate(pa, out->grad);
                                       detail::accumulate<Scalar>(pb, -out->grad);
                                     };
                                   });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return detail::record_op<Scalar>(a.shape(), a.values() * b.values(), {&a, &b},
                                   [pa = a.node_ptr(), pb = b.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, pb, out] {
                                       detail::accumulate<Scalar>(pa, out->grad * pb->value);
                                       detail::accumulate<Scalar>(pb, out->grad * pa->value);
                                     };
                                   });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return detail::record_op<Scalar>(a.shape(), a.values() * factor, {&a},
                                   [pa = a.node_ptr(), factor](const NodePtr<Scalar>& out) {
                                     return [pa, out, factor] {
                                       detail::accumulate<Scalar>(pa, out->grad * factor);
                                     };
                                   });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  return detail::record_op<Scalar>(a.shape(), a.values() + offset, {&a},
                                   [pa = a.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, out] { detail::accumulate(pa, out->grad); };
                                   });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  Buffer<Scalar> y = Scalar(1) / (Scalar(1) + (-a.values()).exp());
  return detail::record_op<Scalar>(a.shape(), y, {&a}, [pa = a.node_ptr()](const NodePtr<Scalar>& out) {
    return [pa, out] {
      detail::accumulate<Scalar>(pa, out->grad * out->value * (Scalar(1) - out->value));
    };
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return detail::record_op<Scalar>(a.shape(), a.values().max(Scalar(0)), {&a},
                                   [pa = a.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, out] {
                                       detail::accumulate<Scalar>(
                                           pa, (pa->value > Scalar(0)).select(out->grad, Scalar(0)));
                                     };
                                   });
}

// Gradient passes only where lo <= a <= hi.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  return detail::record_op<Scalar>(
      a.shape(), a.values().max(lo).min(hi), {&a}, [pa = a.node_ptr(), lo, hi](const NodePtr<Scalar>& out) {
        return [pa, out, lo, hi] {
          detail::accumulate<Scalar>(
              pa, ((pa->value >= lo) && (pa->value <= hi)).select(out->grad, Scalar(0)));
        };
      });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  Buffer<Scalar> v = Buffer<Scalar>::Constant(1, a.values().sum());
  return detail::record_op<Scalar>(Shape{1}, v, {&a}, [pa = a.node_ptr()](const NodePtr<Scalar>& out) {
    return [pa, out] {
      detail::accumulate<Scalar>(pa, Buffer<Scalar>::Constant(pa->value.size(), out->grad(0)));
    };
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
  return scale(sum(a), inv);
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return detail::record_op<Scalar>(std::move(shape), a.values(), {&a},
                                   [pa = a.node_ptr()](const NodePtr<Scalar>& out) {
                                     return [pa, out] { detail::accumulate(pa, out->grad); };
                                   });
}

// ---------------------------------------------------------------------------
// Dense layers

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer<Scalar> c(m * n);
  Eigen::Map<RowMatrix<Scalar>>(c.data(), m, n).noalias() =
      Eigen::Map<const RowMatrix<Scalar>>(a.values().data(), m, k) *
      Eigen::Map<const RowMatrix<Scalar>>(b.values().data(), k, n);
  return detail::record_op<Scalar>(
      Shape{m, n}, std::move(c), {&a, &b},
      [pa = a.node_ptr(), pb = b.node_ptr(), m, k, n](const NodePtr<Scalar>& out) {
        return [pa, pb, out, m, k, n] {
          Eigen::Map<const RowMatrix<Scalar>> dc(out->grad.data(), m, n);
          if (pa->requires_grad) {
            Eigen::Map<RowMatrix<Scalar>>(pa->grad_buffer().data(), m, k).noalias() +=
                dc * Eigen::Map<const RowMatrix<Scalar>>(pb->value.data(), k, n).transpose();
          }
          if (pb->requires_grad) {
            Eigen::Map<RowMatrix<Scalar>>(pb->grad_buffer().data(), k, n).noalias() +=
                Eigen::Map<const RowMatrix<Scalar>>(pa->value.data(), m, k).transpose() * dc;
          }
        };
      });
}

// y = x Wᵀ + bias, with x (N, in), weight (out, in), bias (out) or undefined.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const Index n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{out_dim}) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " for " +
                         std::to_string(out_dim) + " outputs");
  }
  Buffer<Scalar> y(n * out_dim);
  Eigen::Map<RowMatrix<Scalar>> ym(y.data(), n, out_dim);
  ym.noalias() = Eigen::Map<const RowMatrix<Scalar>>(x.values().data(), n, in) *
                 Eigen::Map<const RowMatrix<Scalar>>(weight.values().data(), out_dim, in).transpose();
  if (has_bias) ym.rowwise() += bias.values().matrix().transpose();

  auto rule = [px = x.node_ptr(), pw = weight.node_ptr(), pb = has_bias ? bias.node_ptr() : nullptr, n,
               in, out_dim](const NodePtr<Scalar>& out) {
    return [px, pw, pb, out, n, in, out_dim] {
      Eigen::Map<const RowMatrix<Scalar>> dy(out->grad.data(), n, out_dim);
      if (px->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>>(px->grad_buffer().data(), n, in).noalias() +=
            dy * Eigen::Map<const RowMatrix<Scalar>>(pw->value.data(), out_dim, in);
      }
      if (pw->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>>(pw->grad_buffer().data(), out_dim, in).noalias() +=
            dy.transpose() * Eigen::Map<const RowMatrix<Scalar>>(px->value.data(), n, in);
      }
      if (pb && pb->requires_grad) pb->grad_buffer() += dy.colwise().sum().transpose().array();
    };
  };
  if (has_bias) return detail::record_op<Scalar>(Shape{n, out_dim}, std::move(y), {&x, &weight, &bias}, rule);
  return detail::record_op<Scalar>(Shape{n, out_dim}, std::move(y), {&x, &weight}, rule);
}

// Adds bias[c] to every element of channel c (axis 1).
template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  if (x.rank() < 2 || bias.shape() != Shape{x.dim(1)}) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " for input " +
                         to_string(x.shape()));
  }
  const Index n = x.dim(0), c = x.dim(1), inner = x.size() / (n * c);
  Buffer<Scalar> y = x.values();
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch) y.segment((i * c + ch) * inner, inner) += bias.values()(ch);
  return detail::record_op<Scalar>(
      x.shape(), std::move(y), {&x, &bias},
      [px = x.node_ptr(), pb = bias.node_ptr(), n, c, inner](const NodePtr<Scalar>& out) {
        return [px, pb, out, n, c, inner] {
          detail::accumulate(px, out->grad);
          if (!pb->requires_grad) return;
          auto& gb = pb->grad_buffer();
          for (Index i = 0; i < n; ++i)
            for (Index ch = 0; ch < c; ++ch) gb(ch) += out->grad.segment((i * c + ch) * inner, inner).sum();
        };
      });
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)

struct ConvGeometry {
  Index channels = 0, height = 0, width = 0;  // of the convolution input
  Index kernel_h = 0, kernel_w = 0;
  Index stride = 1, pad = 0;
  Index out_h = 0, out_w = 0;

  Index patch() const { return channels * kernel_h * kernel_w; }
  Index out_pixels() const { return out_h * out_w; }
};

inline Index conv_output_size(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

namespace detail {

inline void check_conv_params(Index stride, Index pad, const char* op) {
  if (stride != 1 && stride != 2)
    throw ValidationError(std::string(op) + ": stride must be 1 or 2, got " + std::to_string(stride));
  if (pad != 0 && pad != 1)
    throw ValidationError(std::string(op) + ": pad must be 0 or 1, got " + std::to_string(pad));
}

// cols(c*kh*kw + ky*kw + kx, n*P + p) = x[n, c, oy*s - pad + ky, ox*s - pad + kx].
template <typename Scalar>
void im2col(const Scalar* x, Index batch, const ConvGeometry& g, RowMatrix<Scalar>& cols) {
  const Index pixels = g.out_pixels();
  cols.setZero(g.patch(), batch * pixels);
  for (Index n = 0; n < batch; ++n) {
    const Scalar* xn = x + n * g.channels * g.height * g.width;
    for (Index c = 0; c < g.channels; ++c) {
      for (Index ky = 0; ky < g.kernel_h; ++ky) {
        for (Index kx = 0; kx < g.kernel_w; ++kx) {
          Scalar* row = cols.row((c * g.kernel_h + ky) * g.kernel_w + kx).data() + n * pixels;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            const Scalar* src = xn + (c * g.height + iy) * g.width;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.width) row[oy * g.out_w + ox] = src[ix];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back into x.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index batch, const ConvGeometry& g, Scalar* x) {
  const Index pixels = g.out_pixels();
  for (Index n = 0; n < batch; ++n) {
    Scalar* xn = x + n * g.channels * g.height * g.width;
    for (Index c = 0; c < g.channels; ++c) {
      for (Index ky = 0; ky < g.kernel_h; ++ky) {
        for (Index kx = 0; kx < g.kernel_w; ++kx) {
          const Scalar* row = cols.row((c * g.kernel_h + ky) * g.kernel_w + kx).data() + n * pixels;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            Scalar* dst = xn + (c * g.height + iy) * g.width;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.width) dst[ix] += row[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

// (N, C, P) <-> (C, N*P)
template <typename Scalar>
void to_channel_major(const Scalar* src, Index batch, Index channels, Index pixels, RowMatrix<Scalar>& dst) {
  dst.resize(channels, batch * pixels);
  for (Index n = 0; n < batch; ++n)
    for (Index c = 0; c < channels; ++c)
      std::copy_n(src + (n * channels + c) * pixels, pixels, dst.row(c).data() + n * pixels);
}

template <typename Scalar>
void from_channel_major(const RowMatrix<Scalar>& src, Index batch, Index channels, Index pixels, Scalar* dst,
                        bool accumulate_into) {
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const Scalar* s = src.row(c).data() + n * pixels;
      Scalar* d = dst + (n * channels + c) * pixels;
      if (accumulate_into) {
        for (Index p = 0; p < pixels; ++p) d[p] += s[p];
      } else {
        std::copy_n(s, pixels, d);
      }
    }
  }
}

}  // namespace detail

// x (N, C_in, H, W), kernel (C_out, C_in, kh, kw) -> (N, C_out, H_out, W_out).
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, Index stride, Index pad) {
  detail::check_conv_params(stride, pad, "conv2d");
  detail::require_rank(x, 4, "conv2d");
  detail::require_rank(kernel, 4, "conv2d");
  if (x.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
  }
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), kernel.dim(2), kernel.dim(3), stride, pad, 0, 0};
  g.out_h = conv_output_size(g.height, g.kernel_h, stride, pad);
  g.out_w = conv_output_size(g.width, g.kernel_w, stride, pad);
  if (g.out_h < 1 || g.out_w < 1) {
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " with kernel " + to_string(kernel.shape()) +
                         " gives nonpositive output size");
  }
  const Index batch = x.dim(0), c_out = kernel.dim(0), pixels = g.out_pixels();
  auto cols = std::make_shared<RowMatrix<Scalar>>();
  detail::im2col(x.values().data(), batch, g, *cols);
  Eigen::Map<const RowMatrix<Scalar>> k(kernel.values().data(), c_out, g.patch());
  RowMatrix<Scalar> y = k * *cols;
  Buffer<Scalar> out(batch * c_out * pixels);
  detail::from_channel_major(y, batch, c_out, pixels, out.data(), false);

  return detail::record_op<Scalar>(
      Shape{batch, c_out, g.out_h, g.out_w}, std::move(out), {&x, &kernel},
      [px = x.node_ptr(), pk = kernel.node_ptr(), cols, g, batch, c_out](const NodePtr<Scalar>& node) {
        return [px, pk, node, cols, g, batch, c_out] {
          RowMatrix<Scalar> dy;
          detail::to_channel_major(node->grad.data(), batch, c_out, g.out_pixels(), dy);
          if (pk->requires_grad) {
            Eigen::Map<RowMatrix<Scalar>>(pk->grad_buffer().data(), c_out, g.patch()).noalias() +=
                dy * cols->transpose();
          }
          if (px->requires_grad) {
            RowMatrix<Scalar> dcols =
                Eigen::Map<const RowMatrix<Scalar>>(pk->value.data(), c_out, g.patch()).transpose() * dy;
            detail::col2im(dcols, batch, g, px->grad_buffer().data());
          }
        };
      });
}

// Adjoint of conv2d with respect to its input. y (N, C_y, H_y, W_y) and
// kernel (C_y, C_x, kh, kw) produce x (N, C_x, H_x, W_x) with
// H_x = (H_y - 1)*stride - 2*pad + kh + output_padding; output_padding
// defaults to stride - 1 so that stride-2 pad-1 layers exactly double H.
template <typename Scalar>
Tensor<Scalar> conv2d_transpose(const Tensor<Scalar>& y, const Tensor<Scalar>& kernel, Index stride, Index pad,
                                Index output_padding = -1) {
  detail::check_conv_params(stride, pad, "conv2d_transpose");
  detail::require_rank(y, 4, "conv2d_transpose");
  detail::require_rank(kernel, 4, "conv2d_transpose");
  if (y.dim(1) != kernel.dim(0)) {
    throw DimensionError("conv2d_transpose: input " + to_string(y.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
  }
  if (output_padding < 0) output_padding = stride - 1;
  if (output_padding >= stride) {
    throw ValidationError("conv2d_transpose: output_padding must be smaller than stride");
  }
  ConvGeometry g{kernel.dim(1), 0, 0, kernel.dim(2), kernel.dim(3), stride, pad, y.dim(2), y.dim(3)};
  g.height = (g.out_h - 1) * stride - 2 * pad + g.kernel_h + output_padding;
  g.width = (g.out_w - 1) * stride - 2 * pad + g.kernel_w + output_padding;
  if (g.height < 1 || g.width < 1 || conv_output_size(g.height, g.kernel_h, stride, pad) != g.out_h ||
      conv_output_size(g.width, g.kernel_w, stride, pad) != g.out_w) {
    throw DimensionError("conv2d_transpose: input " + to_string(y.shape()) + " with kernel " +
                         to_string(kernel.shape()) + " gives nonpositive output size");
  }
  const Index batch = y.dim(0), c_y = kernel.dim(0), pixels = g.out_pixels();
  auto ym = std::make_shared<RowMatrix<Scalar>>();
  detail::to_channel_major(y.values().data(), batch, c_y, pixels, *ym);
  RowMatrix<Scalar> cols = Eigen::Map<const RowMatrix<Scalar>>(kernel.values().data(), c_y, g.patch()).transpose() * *ym;
  Buffer<Scalar> out = Buffer<Scalar>::Zero(batch * g.channels * g.height * g.width);
  detail::col2im(cols, batch, g, out.data());

  return detail::record_op<Scalar>(
      Shape{batch, g.channels, g.height, g.width}, std::move(out), {&y, &kernel},
      [py = y.node_ptr(), pk = kernel.node_ptr(), ym, g, batch, c_y](const NodePtr<Scalar>& node) {
        return [py, pk, node, ym, g, batch, c_y] {
          RowMatrix<Scalar> dcols;
          detail::im2col(node->grad.data(), batch, g, dcols);
          if (pk->requires_grad) {
            Eigen::Map<RowMatrix<Scalar>>(pk->grad_buffer().data(), c_y, g.patch()).noalias() +=
                *ym * dcols.transpose();
          }
          if (py->requires_grad) {
            RowMatrix<Scalar> dy = Eigen::Map<const RowMatrix<Scalar>>(pk->value.data(), c_y, g.patch()) * dcols;
            detail::from_channel_major(dy, batch, c_y, g.out_pixels(), py->grad_buffer().data(), true);
          }
        };
      });
}

// ---------------------------------------------------------------------------
// Time axis

// (B, ...) -> (T*B, ...), the same block at every step.
template <typename Scalar>
Tensor<Scalar> time_repeat(const Tensor<Scalar>& x, Index steps) {
  if (steps < 1) throw ValidationError("time_repeat: steps must be positive");
  Shape shape = x.shape();
  shape.at(0) *= steps;
  const Index block = x.size();
  Buffer<Scalar> y(block * steps);
  for (Index t = 0; t < steps; ++t) y.segment(t * block, block) = x.values();
  return detail::record_op<Scalar>(std::move(shape), std::move(y), {&x},
                                   [px = x.node_ptr(), steps, block](const NodePtr<Scalar>& out) {
                                     return [px, out, steps, block] {
                                       if (!px->requires_grad) return;
                                       auto& g = px->grad_buffer();
                                       for (Index t = 0; t < steps; ++t) g += out->grad.segment(t * block, block);
                                     };
                                   });
}

// (T*B, ...) -> (B, ...), averaged over steps.
template <typename Scalar>
Tensor<Scalar> time_mean(const Tensor<Scalar>& x, Index steps) {
  if (steps < 1 || x.rank() < 1 || x.dim(0) % steps != 0) {
    throw DimensionError("time_mean: leading dimension of " + to_string(x.shape()) + " is not a multiple of " +
                         std::to_string(steps));
  }
  Shape shape = x.shape();
  shape[0] /= steps;
  const Index block = x.size() / steps;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(steps);
  Buffer<Scalar> y = Buffer<Scalar>::Zero(block);
  for (Index t = 0; t < steps; ++t) y += x.values().segment(t * block, block);
  y *= inv;
  return detail::record_op<Scalar>(std::move(shape), std::move(y), {&x},
                                   [px = x.node_ptr(), steps, block, inv](const NodePtr<Scalar>& out) {
                                     return [px, out, steps, block, inv] {
                                       if (!px->requires_grad) return;
                                       auto& g = px->grad_buffer();
                                       for (Index t = 0; t < steps; ++t) g.segment(t * block, block) += out->grad * inv;
                                     };
                                   });
}

}  // namespace esvae

#endif  // ESVAE_OPS_HPP_
