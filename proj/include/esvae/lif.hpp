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

// Leaky integrate-and-fire dynamics with a rectangular surrogate gradient.
//
// Per step:
//   m' = decay * v + I
//   s  = H(m' - v_theta)                   (forward: exact step)
//   v' = m' * (1 - s) + v_reset * s
// and in the backward pass ds/dm = 1/alpha inside |m - v_theta| < alpha/2,
// zero elsewhere.
//
// `decay` is the multiplicative per-step leak (0.25 by default). It is the
// stable reading of the leak factor; using its reciprocal as a multiplier
// would make the membrane potential grow without bound.

#ifndef ESVAE_LIF_HPP_
#define ESVAE_LIF_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "esvae/ops.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

struct LIFParams {
  double v_theta = 0.2;
  double decay = 0.25;
  double v_reset = 0.0;
  double alpha = 0.5;  // surrogate window width

  void validate() const {
    if (!(decay > 0.0 && decay < 1.0)) throw ValidationError("LIF decay must lie in (0, 1)");
    if (!(v_theta > 0.0)) throw ValidationError("LIF threshold must be positive");
    if (!(alpha > 0.0)) throw ValidationError("surrogate width alpha must be positive");
    if (!(v_reset < v_theta)) throw ValidationError("reset potential must lie below the threshold");
  }
};

template <typename Scalar>
struct LIFState {
  Tensor<Scalar> v;  // membrane potential after reset
  Tensor<Scalar> m;  // instantaneous potential before reset

  static LIFState zeros(const Shape& shape) { return {Tensor<Scalar>::zeros(shape), Tensor<Scalar>::zeros(shape)}; }
};

template <typename Scalar>
struct LIFStepResult {
  Tensor<Scalar> spikes;
  LIFState<Scalar> state;
};

// Heaviside spike with rectangular surrogate derivative (1/alpha)·1(|m - theta| < alpha/2).
template <typename Scalar>
Tensor<Scalar> threshold_spike(const Tensor<Scalar>& m, Scalar v_theta, Scalar alpha) {
  Buffer<Scalar> s = (m.values() >= v_theta).template cast<Scalar>();
  return detail::record_op<Scalar>(
      m.shape(), std::move(s), {&m}, [pm = m.node_ptr(), v_theta, alpha](const NodePtr<Scalar>& out) {
        return [pm, out, v_theta, alpha] {
          const Scalar inv_alpha = Scalar(1) / alpha;
          detail::accumulate<Scalar>(
              pm, ((pm->value - v_theta).abs() < alpha / Scalar(2)).select(out->grad * inv_alpha, Scalar(0)));
        };
      });
}

// One LIF update. Composed from differentiable primitives, so gradients flow
// through the membrane state into earlier steps.
template <typename Scalar>
LIFStepResult<Scalar> lif_step(const Tensor<Scalar>& input_current, const LIFState<Scalar>& state,
                               const LIFParams& params) {
  if (input_current.shape() != state.v.shape()) {
    throw DimensionError("lif_step: input " + to_string(input_current.shape()) + " does not match state " +
                         to_string(state.v.shape()));
  }
  Tensor<Scalar> m = add(scale(state.v, static_cast<Scalar>(params.decay)), input_current);
  Tensor<Scalar> s = threshold_spike(m, static_cast<Scalar>(params.v_theta), static_cast<Scalar>(params.alpha));
  Tensor<Scalar> v = add(sub(m, mul(m, s)), scale(s, static_cast<Scalar>(params.v_reset)));
  return {s, {v, m}};
}

// Runs LIF over a time-stacked current (T*B, ...) from a zero state and
// returns the time-stacked spikes. Equivalent to chaining lif_step T times,
// with the whole BPTT recursion recorded as one operation.
template <typename Scalar>
Tensor<Scalar> lif_sequence(const Tensor<Scalar>& current, Index steps, const LIFParams& params) {
  if (steps < 1 || current.rank() < 1 || current.dim(0) % steps != 0) {
    throw DimensionError("lif_sequence: leading dimension of " + to_string(current.shape()) +
                         " is not a multiple of " + std::to_string(steps));
  }
  const Index block = current.size() / steps;
  const Scalar decay = static_cast<Scalar>(params.decay);
  const Scalar theta = static_cast<Scalar>(params.v_theta);
  const Scalar reset = static_cast<Scalar>(params.v_reset);
  const Scalar alpha = static_cast<Scalar>(params.alpha);

  auto potentials = std::make_shared<Buffer<Scalar>>(current.size());
  Buffer<Scalar> spikes(current.size());
  Buffer<Scalar> v = Buffer<Scalar>::Constant(block, Scalar(0));
  const Scalar* in = current.values().data();
  for (Index t = 0; t < steps; ++t) {
    for (Index i = 0; i < block; ++i) {
      const Index k = t * block + i;
      const Scalar m = decay * v(i) + in[k];
      const Scalar s = m >= theta ? Scalar(1) : Scalar(0);
      (*potentials)(k) = m;
      spikes(k) = s;
      v(i) = s != Scalar(0) ? reset : m;
    }
  }

  return detail::record_op<Scalar>(
      current.shape(), std::move(spikes), {&current},
      [pc = current.node_ptr(), potentials, steps, block, decay, theta, reset, alpha](const NodePtr<Scalar>& out) {
        return [pc, out, potentials, steps, block, decay, theta, reset, alpha] {
          if (!pc->requires_grad) return;
          auto& gin = pc->grad_buffer();
          const Scalar inv_alpha = Scalar(1) / alpha;
          const Scalar half = alpha / Scalar(2);
          Buffer<Scalar> gv = Buffer<Scalar>::Zero(block);  // dL/dv_t carried from step t+1
          for (Index t = steps - 1; t >= 0; --t) {
            for (Index i = 0; i < block; ++i) {
              const Index k = t * block + i;
              const Scalar m = (*potentials)(k);
              const Scalar s = out->value(k);
              const Scalar surrogate = std::abs(m - theta) < half ? inv_alpha : Scalar(0);
              const Scalar gm = out->grad(k) * surrogate + gv(i) * ((Scalar(1) - s) + (reset - m) * surrogate);
              gin(k) += gm;
              gv(i) = gm * decay;
            }
          }
        };
      });
}

}  // namespace esvae

#endif  // ESVAE_LIF_HPP_
