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

#ifndef ESVAE_TDBN_HPP_
#define ESVAE_TDBN_HPP_

#include <cmath>
#include <memory>
#include <utility>

#include "esvae/ops.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

enum class NormMode { train, eval };

// Running per-channel statistics. Variances are the biased (population)
// estimates, so eval mode reproduces train mode on a converged batch.
template <typename Scalar>
struct NormStats {
  Buffer<Scalar> running_mean;
  Buffer<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  bool initialized = false;

  explicit NormStats(Index channels = 0)
      : running_mean(Buffer<Scalar>::Zero(channels)), running_var(Buffer<Scalar>::Ones(channels)) {}
};

inline constexpr double kNormEpsilon = 1e-5;

// Threshold-dependent batch normalization over a (N, C, ...) tensor whose
// leading axis stacks batch and time. Statistics pool every axis except the
// channel axis. In train mode the batch statistics are used and, when
// `stats` is given, folded into the running estimates; eval mode normalizes
// with the running estimates.
template <typename Scalar>
Tensor<Scalar> tdbn_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                            NormMode mode, NormStats<Scalar>* stats) {
  if (x.rank() < 2) throw DimensionError("tdbn: input needs a channel axis, got " + to_string(x.shape()));
  const Index n = x.dim(0), channels = x.dim(1), inner = x.size() / (n * channels);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw DimensionError("tdbn: affine parameters " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                         " for " + std::to_string(channels) + " channels");
  }
  const Scalar eps = static_cast<Scalar>(kNormEpsilon);
  const Scalar count = static_cast<Scalar>(n * inner);
  const Scalar* xv = x.values().data();

  Buffer<Scalar> mu(channels), var(channels);
  if (mode == NormMode::train) {
    mu.setZero();
    var.setZero();
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < channels; ++c)
        mu(c) += Eigen::Map<const Buffer<Scalar>>(xv + (i * channels + c) * inner, inner).sum();
    mu /= count;
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < channels; ++c)
        var(c) += (Eigen::Map<const Buffer<Scalar>>(xv + (i * channels + c) * inner, inner) - mu(c)).square().sum();
    var /= count;
    if (stats) {
      if (stats->running_mean.size() != channels) *stats = NormStats<Scalar>(channels);
      stats->running_mean = (Scalar(1) - stats->momentum) * stats->running_mean + stats->momentum * mu;
      stats->running_var = (Scalar(1) - stats->momentum) * stats->running_var + stats->momentum * var;
      stats->initialized = true;
    }
  } else {
    if (!stats || !stats->initialized) {
      throw ContractError("tdbn: eval mode before running statistics were initialized by a train-mode pass");
    }
    if (stats->running_mean.size() != channels) throw DimensionError("tdbn: running statistics channel mismatch");
    mu = stats->running_mean;
    var = stats->running_var;
  }
  auto inv_std = std::make_shared<Buffer<Scalar>>((var + eps).rsqrt());
  auto xhat = std::make_shared<Buffer<Scalar>>(x.size());
  Buffer<Scalar> y(x.size());
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < channels; ++c) {
      const Index off = (i * channels + c) * inner;
      xhat->segment(off, inner) = (x.values().segment(off, inner) - mu(c)) * (*inv_std)(c);
      y.segment(off, inner) = xhat->segment(off, inner) * gamma.values()(c) + beta.values()(c);
    }
  }

  return detail::record_op<Scalar>(
      x.shape(), std::move(y), {&x, &gamma, &beta},
      [px = x.node_ptr(), pg = gamma.node_ptr(), pb = beta.node_ptr(), xhat, inv_std, n, channels, inner, count,
       mode](const NodePtr<Scalar>& out) {
        return [px, pg, pb, out, xhat, inv_std, n, channels, inner, count, mode] {
          const auto& dy = out->grad;
          Buffer<Scalar> sum_dy = Buffer<Scalar>::Zero(channels);
          Buffer<Scalar> sum_dy_xhat = Buffer<Scalar>::Zero(channels);
          for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < channels; ++c) {
              const Index off = (i * channels + c) * inner;
              sum_dy(c) += dy.segment(off, inner).sum();
              sum_dy_xhat(c) += (dy.segment(off, inner) * xhat->segment(off, inner)).sum();
            }
          }
          if (pg->requires_grad) pg->grad_buffer() += sum_dy_xhat;
          if (pb->requires_grad) pb->grad_buffer() += sum_dy;
          if (!px->requires_grad) return;
          auto& gx = px->grad_buffer();
          for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < channels; ++c) {
              const Index off = (i * channels + c) * inner;
              const Scalar k = pg->value(c) * (*inv_std)(c);
              if (mode == NormMode::train) {
                gx.segment(off, inner) += k * (dy.segment(off, inner) - sum_dy(c) / count -
                                               xhat->segment(off, inner) * (sum_dy_xhat(c) / count));
              } else {
                gx.segment(off, inner) += k * dy.segment(off, inner);
              }
            }
          }
        };
      });
}

}  // namespace esvae

#endif  // ESVAE_TDBN_HPP_
