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

// Training, reconstruction and generation for EsvaeModel, plus the
// rate-space classification probe.
//
// One training step on images x:
//   x_e = encoder(x)                  spikes (T*B, d)
//   r_p = firing_rate(x_e)            (B, d), multiples of 1/T
//   r_q = prior(z_n), z_n ~ N(0, 1)   (B, d)
//   z_p = sample_spikes(r_p)          fresh uniform draw
//   x^  = decoder(z_p)
//   loss = mse(x, x^) + lambda * mmd^2(r_p, r_q)
// followed by global-norm clipping and an AdamW update with separate
// learning rates for the body and the prior bottleneck.

#ifndef ESVAE_TRAINER_HPP_
#define ESVAE_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "esvae/data.hpp"
#include "esvae/losses.hpp"
#include "esvae/model.hpp"
#include "esvae/optim.hpp"
#include "esvae/poisson.hpp"

namespace esvae {

struct StepMetrics {
  LossReport loss;
  double encoder_rate = 0.0;  // mean of r_p
  double grad_norm = 0.0;     // before clipping
};

struct EpochMetrics {
  int epoch = 0;
  double mse = 0.0;
  double mmd2 = 0.0;
  double total = 0.0;
  double encoder_rate = 0.0;
  Index batches = 0;

  bool operator==(const EpochMetrics&) const = default;
};

class Trainer {
 public:
  explicit Trainer(EsvaeModel& model);

  // One optimization step. `trace`, when given, receives the stage labels
  // in execution order. Throws NumericError on a non-finite loss.
  StepMetrics train_step(const Tensorf& images, std::vector<std::string>* trace = nullptr);

  // One pass over `data` in seed-derived shuffled order.
  EpochMetrics train_epoch(const Dataset& data, int epoch);

  AdamW<float>& optimizer() { return optimizer_; }
  long step_count() const { return optimizer_.step_count(); }
  // Global batch counter; seeds the per-step prior noise and sampler draws.
  Index batch_index() const { return batch_index_; }
  void set_batch_index(Index k) { batch_index_ = k; }

 private:
  EsvaeModel& model_;
  AdamW<float> optimizer_;
  Index batch_index_ = 0;
  std::vector<Tensorf> all_params_;
};

struct Reconstruction {
  Tensorf images;        // (B, C, H, W)
  RateVector rates;      // r_p
  SpikeTrain latent;     // z_p sampled from r_p
};

// Inference-mode reconstruction with the sampler seeded by `seed`.
Reconstruction reconstruct(EsvaeModel& model, const Tensorf& images, std::uint64_t seed);

// Decoder output for given latent spikes.
Tensorf decode_latent(EsvaeModel& model, const SpikeTrain& latent);

// Encoder firing rates r_p for `images` (B, C, H, W).
RateVector encode_rates(EsvaeModel& model, const Tensorf& images);

// Prior rates r_q for n standard-normal noise vectors derived from `seed`.
RateVector sample_prior_rates(const EsvaeModel& model, Index n, std::uint64_t seed);

// n images from the prior: z_n ~ N(0,1), r_q = prior(z_n), z_q ~ sampler(r_q),
// decoded. Returns a (0, C, H, W) tensor when n == 0.
Tensorf generate_images(EsvaeModel& model, Index n, std::uint64_t seed);

// Mean reconstruction error helpers over a dataset, in batches.
double dataset_mse(EsvaeModel& model, const Dataset& data, Index batch_size, std::uint64_t seed);
double constant_baseline_mse(const Dataset& data, float value);

// Encoder rates for a whole dataset, in batches.
RateVector dataset_rates(EsvaeModel& model, const Dataset& data, Index batch_size);

struct ProbeConfig {
  int epochs = 200;
  double lr = 0.01;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Trains the 128-512-256-128-10 ReLU classifier on `train_rates` with SGD
// and softmax cross-entropy; returns accuracy on `test_rates`.
double probe_train_eval(const RateVector& train_rates, std::span<const int> train_labels,
                        const RateVector& test_rates, std::span<const int> test_labels, const ProbeConfig& cfg);

}  // namespace esvae

#endif  // ESVAE_TRAINER_HPP_
