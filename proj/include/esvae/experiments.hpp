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


// Latent-space experiments on a trained model: shuffled and perturbed spike
// latents, and static operation counts for the energy estimate.
//
// All reconstruction losses are per-pixel MSE averaged over a dataset. The
// "vanilla" reconstruction decodes the unmodified posterior spikes; the same
// sampler draws are reused for every variant so differences come only from
// the modification.

#ifndef ESVAE_EXPERIMENTS_HPP_
#define ESVAE_EXPERIMENTS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esvae/metrics.hpp"
#include "esvae/trainer.hpp"

namespace esvae {

enum class ShuffleDim { time, length };

ShuffleDim parse_shuffle_dim(const std::string& name);

struct ShuffleResult {
  double vanilla_vs_original = 0.0;
  double shuffled_vs_original = 0.0;
  double shuffled_vs_vanilla = 0.0;
  // First few images of each kind, (k, C, H, W), for montages.
  Tensorf original, vanilla, shuffled;
};

ShuffleResult shuffle_test(EsvaeModel& model, const Dataset& data, ShuffleDim dim, std::uint64_t seed,
                           Index batch_size, Index keep = 8);

struct NoisePoint {
  double flip_probability = 0.0;
  double vs_original = 0.0;
  double vs_vanilla = 0.0;
};

// One point per probability. Flips use one variate stream for all
// probabilities, so a larger probability flips a superset of bits.
std::vector<NoisePoint> noise_test(EsvaeModel& model, const Dataset& data, std::span<const double> probs,
                                   std::uint64_t seed, Index batch_size);

struct LayerFlops {
  std::string name;
  std::string part;
  bool spiking_input = true;
  double add = 0.0;  // accumulations per time step, one sample
  double mul = 0.0;  // multiplications; only real-valued inputs need them
};

std::vector<LayerFlops> layer_flops(const std::vector<LayerInfo>& layers);

// Spiking energy of the whole network for one sample at average rate `rate`.
EnergyReport model_energy(const std::vector<LayerFlops>& flops, double rate, long steps, bool spiking = true);

}  // namespace esvae

#endif  // ESVAE_EXPERIMENTS_HPP_
