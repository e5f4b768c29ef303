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

#include "esvae/poisson.hpp"

#include <cmath>
#include <string>

namespace esvae {

namespace {

void require_binary(const SpikeTrain& spikes, const char* op) {
  if (spikes.bits.size() != static_cast<std::size_t>(spikes.batch * spikes.neurons * spikes.steps)) {
    throw DimensionError(std::string(op) + ": spike buffer does not match its shape");
  }
  for (std::uint8_t b : spikes.bits) {
    if (b > 1) throw ValidationError(std::string(op) + ": spike train must be binary");
  }
}

void require_draw_shape(const RateVector& rates, const SamplerDraw& draw, const char* op) {
  if (rates.rows() != draw.batch || rates.cols() != draw.neurons) {
    throw DimensionError(std::string(op) + ": rates (" + std::to_string(rates.rows()) + "," +
                         std::to_string(rates.cols()) + ") do not match draw (" + std::to_string(draw.batch) + "," +
                         std::to_string(draw.neurons) + "," + std::to_string(draw.steps) + ")");
  }
}

}  // namespace

SamplerDraw SamplerDraw::generate(Index batch, Index neurons, Index steps, std::uint64_t seed) {
  if (batch < 0 || neurons < 0 || steps < 1) throw ValidationError("SamplerDraw: invalid shape");
  SamplerDraw draw;
  draw.batch = batch;
  draw.neurons = neurons;
  draw.steps = steps;
  draw.seed = seed;
  draw.u.resize(batch * neurons * steps);
  for (Index k = 0; k < draw.u.size(); ++k) draw.u(k) = counter_uniform(seed, static_cast<std::uint64_t>(k));
  return draw;
}

RateVector firing_rate(const SpikeTrain& spikes) {
  require_binary(spikes, "firing_rate");
  if (spikes.steps < 1) throw ValidationError("firing_rate: empty time window");
  RateVector r(spikes.batch, spikes.neurons);
  for (Index b = 0; b < spikes.batch; ++b)
    for (Index i = 0; i < spikes.neurons; ++i)
      r(b, i) = static_cast<double>(spikes.count(b, i)) / static_cast<double>(spikes.steps);
  return r;
}

SpikeTrain sample_spikes(const RateVector& rates, const SamplerDraw& draw) {
  require_draw_shape(rates, draw, "sample_spikes");
  if (rates.size() > 0 && (rates.minCoeff() < 0.0 || rates.maxCoeff() > 1.0)) {
    throw ValidationError("sample_spikes: rates must lie in [0, 1]");
  }
  SpikeTrain z(draw.batch, draw.neurons, draw.steps);
  z.draw_seed = draw.seed;
  for (Index b = 0; b < draw.batch; ++b)
    for (Index i = 0; i < draw.neurons; ++i)
      for (Index t = 0; t < draw.steps; ++t) z.at(b, i, t) = draw.at(b, i, t) < rates(b, i) ? 1 : 0;
  return z;
}

RateVector sampler_backward(const RateVector& rates, const SamplerDraw& draw, double alpha,
                            const SpikeTrain* forward) {
  require_draw_shape(rates, draw, "sampler_backward");
  if (!(alpha > 0.0)) throw ValidationError("sampler_backward: alpha must be positive");
  if (forward && forward->draw_seed != draw.seed) {
    throw ContractError("sampler_backward: draw seed " + std::to_string(draw.seed) +
                        " differs from the one used in the forward pass");
  }
  RateVector g = RateVector::Zero(rates.rows(), rates.cols());
  for (Index b = 0; b < draw.batch; ++b) {
    for (Index i = 0; i < draw.neurons; ++i) {
      Index inside = 0;
      for (Index t = 0; t < draw.steps; ++t) inside += std::abs(rates(b, i) - draw.at(b, i, t)) < alpha / 2.0;
      g(b, i) = static_cast<double>(inside) / alpha;
    }
  }
  return g;
}

SpikeTrain shuffle_time(const SpikeTrain& spikes, std::uint64_t seed) {
  require_binary(spikes, "shuffle_time");
  SpikeTrain out(spikes.batch, spikes.neurons, spikes.steps);
  Rng rng(seed);
  for (Index b = 0; b < spikes.batch; ++b) {
    for (Index i = 0; i < spikes.neurons; ++i) {
      const auto perm = rng.permutation(static_cast<std::size_t>(spikes.steps));
      for (Index t = 0; t < spikes.steps; ++t) out.at(b, i, t) = spikes.at(b, i, static_cast<Index>(perm[t]));
    }
  }
  return out;
}

SpikeTrain shuffle_length(const SpikeTrain& spikes, std::uint64_t seed) {
  require_binary(spikes, "shuffle_length");
  SpikeTrain out(spikes.batch, spikes.neurons, spikes.steps);
  Rng rng(seed);
  const auto perm = rng.permutation(static_cast<std::size_t>(spikes.neurons));
  for (Index b = 0; b < spikes.batch; ++b)
    for (Index i = 0; i < spikes.neurons; ++i)
      for (Index t = 0; t < spikes.steps; ++t) out.at(b, i, t) = spikes.at(b, static_cast<Index>(perm[i]), t);
  return out;
}

SpikeTrain perturb_spikes(const SpikeTrain& spikes, double flip_probability, std::uint64_t seed) {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ValidationError("perturb_spikes: probability must lie in [0, 1]");
  }
  require_binary(spikes, "perturb_spikes");
  SpikeTrain out = spikes;
  out.draw_seed.reset();
  for (std::size_t k = 0; k < out.bits.size(); ++k) {
    if (counter_uniform(seed, k) < flip_probability) out.bits[k] ^= 1;
  }
  return out;
}

CountLaw count_pmf(Index n, double rate, Index steps) {
  if (n < 0 || n > steps) {
    throw ValidationError("count_pmf: spike count " + std::to_string(n) + " outside [0, " + std::to_string(steps) +
                          "]");
  }
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("count_pmf: rate must lie in [0, 1]");
  const double nd = static_cast<double>(n), td = static_cast<double>(steps);
  const double log_choose = std::lgamma(td + 1.0) - std::lgamma(nd + 1.0) - std::lgamma(td - nd + 1.0);
  CountLaw law;
  law.binomial = std::exp(log_choose) * std::pow(rate, nd) * std::pow(1.0 - rate, td - nd);
  const double lambda = rate * td;
  law.poisson = std::pow(lambda, nd) * std::exp(-lambda) / std::exp(std::lgamma(nd + 1.0));
  return law;
}

}  // namespace esvae
