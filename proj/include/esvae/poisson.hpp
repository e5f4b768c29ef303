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

// Firing-rate latent space.
//
// A latent neuron with rate r emits a spike at step t iff u[t] < r for
// uniform variates u, so its spike count over T steps is Binomial(T, r) with
// mean r*T. The sampler is made differentiable in r with the rectangular
// surrogate
//
//   dz/dr = (1/alpha) * sum_t 1(|r - u[t]| < alpha/2),
//
// which needs the very same variates used in the forward pass; a SamplerDraw
// carries them together with the seed that produced them.

#ifndef ESVAE_POISSON_HPP_
#define ESVAE_POISSON_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "esvae/ops.hpp"
#include "esvae/random.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

// (batch, d) firing rates in [0, 1].
using RateVector = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Binary spikes of shape (batch, d, T).
struct SpikeTrain {
  Index batch = 0;
  Index neurons = 0;
  Index steps = 0;
  std::vector<std::uint8_t> bits;          // index ((b * neurons) + i) * steps + t
  std::optional<std::uint64_t> draw_seed;  // set when produced by sample_spikes

  SpikeTrain() = default;
  SpikeTrain(Index batch, Index neurons, Index steps)
      : batch(batch), neurons(neurons), steps(steps), bits(static_cast<std::size_t>(batch * neurons * steps), 0) {}

  std::uint8_t& at(Index b, Index i, Index t) { return bits[static_cast<std::size_t>((b * neurons + i) * steps + t)]; }
  std::uint8_t at(Index b, Index i, Index t) const {
    return bits[static_cast<std::size_t>((b * neurons + i) * steps + t)];
  }

  Index count(Index b, Index i) const {
    Index c = 0;
    for (Index t = 0; t < steps; ++t) c += at(b, i, t);
    return c;
  }

  bool operator==(const SpikeTrain& other) const {
    return batch == other.batch && neurons == other.neurons && steps == other.steps && bits == other.bits;
  }
};

// Uniform variates u in [0, 1) of shape (batch, d, T), reproducible from `seed`.
struct SamplerDraw {
  Index batch = 0;
  Index neurons = 0;
  Index steps = 0;
  std::uint64_t seed = 0;
  Buffer<double> u;  // same layout as SpikeTrain::bits

  static SamplerDraw generate(Index batch, Index neurons, Index steps, std::uint64_t seed);

  double at(Index b, Index i, Index t) const { return u((b * neurons + i) * steps + t); }
};

// r_i = (1/T) sum_t x[i, t].
RateVector firing_rate(const SpikeTrain& spikes);

// z[b, i, t] = 1 iff u[b, i, t] < r[b, i].
SpikeTrain sample_spikes(const RateVector& rates, const SamplerDraw& draw);

// d(sum_t z)/dr per neuron. When `forward` is given it must have been
// produced from `draw`.
RateVector sampler_backward(const RateVector& rates, const SamplerDraw& draw, double alpha,
                            const SpikeTrain* forward = nullptr);

// Each neuron's T-bit sequence permuted independently; spike counts preserved.
SpikeTrain shuffle_time(const SpikeTrain& spikes, std::uint64_t seed);

// One permutation of the neuron axis shared by all samples and time steps.
SpikeTrain shuffle_length(const SpikeTrain& spikes, std::uint64_t seed);

// Each bit flipped independently with probability `flip_probability`.
SpikeTrain perturb_spikes(const SpikeTrain& spikes, double flip_probability, std::uint64_t seed);

struct CountLaw {
  double binomial = 0.0;  // exact law of the sampler
  double poisson = 0.0;   // (rT)^n e^{-rT} / n!, its large-T approximation
};

CountLaw count_pmf(Index n, double rate, Index steps);

// Conversions between SpikeTrain and time-stacked (T*B, d) tensors.
template <typename Scalar>
Tensor<Scalar> to_time_major(const SpikeTrain& spikes) {
  const Index b = spikes.batch, d = spikes.neurons, steps = spikes.steps;
  Buffer<Scalar> v(steps * b * d);
  for (Index t = 0; t < steps; ++t)
    for (Index s = 0; s < b; ++s)
      for (Index i = 0; i < d; ++i) v((t * b + s) * d + i) = static_cast<Scalar>(spikes.at(s, i, t));
  return Tensor<Scalar>(Shape{steps * b, d}, std::move(v));
}

template <typename Scalar>
SpikeTrain spike_train_from(const Tensor<Scalar>& time_major, Index steps) {
  if (time_major.rank() != 2 || steps < 1 || time_major.dim(0) % steps != 0) {
    throw DimensionError("spike_train_from: expected (T*B, d) with T=" + std::to_string(steps) + ", got " +
                         to_string(time_major.shape()));
  }
  const Index b = time_major.dim(0) / steps, d = time_major.dim(1);
  SpikeTrain out(b, d, steps);
  for (Index t = 0; t < steps; ++t) {
    for (Index s = 0; s < b; ++s) {
      for (Index i = 0; i < d; ++i) {
        const Scalar v = time_major[(t * b + s) * d + i];
        if (v != Scalar(0) && v != Scalar(1)) throw ValidationError("spike_train_from: non-binary value");
        out.at(s, i, t) = v != Scalar(0) ? 1 : 0;
      }
    }
  }
  return out;
}

template <typename Scalar>
RateVector to_rates(const Tensor<Scalar>& rates) {
  if (rates.rank() != 2) throw DimensionError("to_rates: expected (B, d), got " + to_string(rates.shape()));
  RateVector r(rates.dim(0), rates.dim(1));
  for (Index k = 0; k < rates.size(); ++k) r(k / rates.dim(1), k % rates.dim(1)) = static_cast<double>(rates[k]);
  return r;
}

// Differentiable sampler: rates (B, d) -> time-stacked spikes (T*B, d). The
// backward pass applies the rectangular surrogate with the forward variates.
template <typename Scalar>
Tensor<Scalar> sample_spikes(const Tensor<Scalar>& rates, const SamplerDraw& draw, Scalar alpha) {
  if (rates.shape() != Shape{draw.batch, draw.neurons}) {
    throw DimensionError("sample_spikes: rates " + to_string(rates.shape()) + " do not match draw (" +
                         std::to_string(draw.batch) + "," + std::to_string(draw.neurons) + ")");
  }
  const Index b = draw.batch, d = draw.neurons, steps = draw.steps;
  if (rates.size() > 0 && (rates.values().minCoeff() < Scalar(0) || rates.values().maxCoeff() > Scalar(1))) {
    throw ValidationError("sample_spikes: rates must lie in [0, 1]");
  }
  auto u = std::make_shared<Buffer<double>>(draw.u);
  Buffer<Scalar> z(steps * b * d);
  for (Index t = 0; t < steps; ++t)
    for (Index s = 0; s < b; ++s)
      for (Index i = 0; i < d; ++i)
        z((t * b + s) * d + i) = draw.at(s, i, t) < static_cast<double>(rates[s * d + i]) ? Scalar(1) : Scalar(0);

  return detail::record_op<Scalar>(
      Shape{steps * b, d}, std::move(z), {&rates},
      [pr = rates.node_ptr(), u, b, d, steps, alpha](const NodePtr<Scalar>& out) {
        return [pr, out, u, b, d, steps, alpha] {
          if (!pr->requires_grad) return;
          auto& g = pr->grad_buffer();
          const double half = static_cast<double>(alpha) / 2.0;
          const Scalar inv_alpha = Scalar(1) / alpha;
          for (Index s = 0; s < b; ++s) {
            for (Index i = 0; i < d; ++i) {
              const double r = static_cast<double>(pr->value(s * d + i));
              Scalar acc = 0;
              for (Index t = 0; t < steps; ++t) {
                if (std::abs(r - (*u)((s * d + i) * steps + t)) < half) acc += out->grad((t * b + s) * d + i);
              }
              g(s * d + i) += acc * inv_alpha;
            }
          }
        };
      });
}

// Prior rates from standard-normal noise: sigmoid(z W^T + b), kept strictly
// inside (0, 1).
template <typename Scalar>
Tensor<Scalar> prior_rates(const Tensor<Scalar>& noise, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  constexpr Scalar kEdge = Scalar(1e-6);
  return clamp(sigmoid(linear(noise, weight, bias)), kEdge, Scalar(1) - kEdge);
}

}  // namespace esvae

#endif  // ESVAE_POISSON_HPP_
