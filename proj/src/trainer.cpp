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

#include "esvae/trainer.hpp"

#include <cmath>
#include <sstream>

#include "esvae/ops.hpp"
#include "esvae/random.hpp"

namespace esvae {

namespace {

Tensorf normal_noise(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Buffer<float> v(rows * cols);
  for (Index i = 0; i < v.size(); ++i) v(i) = static_cast<float>(rng.normal());
  return Tensorf({rows, cols}, std::move(v));
}

Tensorf rates_tensor(const RateVector& rates) {
  Buffer<float> v(rates.size());
  for (Index i = 0; i < rates.size(); ++i) v(i) = static_cast<float>(rates.data()[i]);
  return Tensorf({rates.rows(), rates.cols()}, std::move(v));
}

std::vector<Index> range(Index begin, Index end) {
  std::vector<Index> idx;
  for (Index i = begin; i < end; ++i) idx.push_back(i);
  return idx;
}

}  // namespace

Trainer::Trainer(EsvaeModel& model) : model_(model) {
  const ModelConfig& cfg = model_.config();
  std::vector<Tensorf> body, bottleneck;
  for (auto& p : model_.parameters()) {
    (p.group == ParamGroup::bottleneck ? bottleneck : body).push_back(p.tensor);
    all_params_.push_back(p.tensor);
  }
  optimizer_.add_group(body, AdamWConfig{cfg.lr, cfg.weight_decay});
  optimizer_.add_group(bottleneck, AdamWConfig{cfg.bottleneck_lr, cfg.weight_decay});
}

StepMetrics Trainer::train_step(const Tensorf& images, std::vector<std::string>* trace) {
  const ModelConfig& cfg = model_.config();
  auto mark = [trace](const char* stage) {
    if (trace) trace->emplace_back(stage);
  };
  const Index batch = images.dim(0);
  const Index step = batch_index_++;

  Tape<float> tape;
  TapeScope<float> scope(tape);
  optimizer_.zero_grad();

  Tensorf encoded = model_.encode(images, true);
  mark("encoder");
  Tensorf posterior = time_mean(encoded, cfg.steps);
  mark("rate");
  Tensorf prior = model_.prior(normal_noise(batch, cfg.latent_dim, derive_seed(cfg.seed, "prior", step)));
  mark("prior");
  const auto draw = SamplerDraw::generate(batch, cfg.latent_dim, cfg.steps, derive_seed(cfg.seed, "sampler", step));
  Tensorf latent = sample_spikes(posterior, draw, static_cast<float>(cfg.alpha));
  mark("sample");
  Tensorf reconstruction = model_.decode(latent, true);
  mark("decoder");
  LossTerms<float> terms = total_loss(images, reconstruction, posterior, prior, cfg.lambda_mmd, cfg.mmd_sigma2);
  mark("loss");

  StepMetrics out;
  out.loss = terms.report(cfg.lambda_mmd);
  out.encoder_rate = static_cast<double>(posterior.values().mean());
  if (!std::isfinite(out.loss.mse) || !std::isfinite(out.loss.mmd2) || !std::isfinite(out.loss.total)) {
    std::ostringstream os;
    os << "non-finite loss at batch " << step << ": mse=" << out.loss.mse << " mmd2=" << out.loss.mmd2
       << (std::isfinite(out.loss.mse) ? " (offending term: mmd2)" : " (offending term: mse)");
    throw NumericError(os.str());
  }

  tape.backward(terms.total);
  out.grad_norm = clip_grad_norm(all_params_, cfg.grad_clip);
  if (!std::isfinite(out.grad_norm)) {
    throw NumericError("non-finite gradient norm at batch " + std::to_string(step));
  }
  optimizer_.step();
  mark("update");
  return out;
}

EpochMetrics Trainer::train_epoch(const Dataset& data, int epoch) {
  const ModelConfig& cfg = model_.config();
  EpochMetrics m;
  m.epoch = epoch;
  for (const auto& idx : make_batches(data.count, cfg.batch_size, derive_seed(cfg.seed, "batches", epoch))) {
    const StepMetrics s = train_step(data.gather(idx));
    m.mse += s.loss.mse;
    m.mmd2 += s.loss.mmd2;
    m.total += s.loss.total;
    m.encoder_rate += s.encoder_rate;
    ++m.batches;
  }
  if (m.batches > 0) {
    const double k = static_cast<double>(m.batches);
    m.mse /= k;
    m.mmd2 /= k;
    m.total /= k;
    m.encoder_rate /= k;
  }
  return m;
}

Reconstruction reconstruct(EsvaeModel& model, const Tensorf& images, std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  Reconstruction out;
  out.rates = encode_rates(model, images);
  out.latent = sample_spikes(out.rates, SamplerDraw::generate(out.rates.rows(), out.rates.cols(), cfg.steps, seed));
  out.images = decode_latent(model, out.latent);
  return out;
}

Tensorf decode_latent(EsvaeModel& model, const SpikeTrain& latent) {
  return model.decode(to_time_major<float>(latent), false);
}

RateVector encode_rates(EsvaeModel& model, const Tensorf& images) {
  return to_rates(time_mean(model.encode(images, false), model.config().steps));
}

RateVector sample_prior_rates(const EsvaeModel& model, Index n, std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  return to_rates(model.prior(normal_noise(n, cfg.latent_dim, derive_seed(seed, "prior"))));
}

Tensorf generate_images(EsvaeModel& model, Index n, std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  if (n == 0) return Tensorf::zeros({0, cfg.image_channels, cfg.image_size, cfg.image_size});
  const RateVector prior = sample_prior_rates(model, n, seed);
  const SpikeTrain z = sample_spikes(prior, SamplerDraw::generate(n, cfg.latent_dim, cfg.steps,
                                                                  derive_seed(seed, "sampler")));
  return decode_latent(model, z);
}

double dataset_mse(EsvaeModel& model, const Dataset& data, Index batch_size, std::uint64_t seed) {
  double total = 0.0;
  for (Index start = 0; start < data.count; start += batch_size) {
    const auto idx = range(start, std::min(data.count, start + batch_size));
    const Tensorf x = data.gather(idx);
    const Reconstruction r = reconstruct(model, x, derive_seed(seed, "eval", static_cast<std::uint64_t>(start)));
    total += (r.images.values().cast<double>() - x.values().cast<double>()).square().sum();
  }
  return total / static_cast<double>(data.count * data.image_size());
}

double constant_baseline_mse(const Dataset& data, float value) {
  double total = 0.0;
  for (float p : data.pixels) total += (static_cast<double>(p) - value) * (static_cast<double>(p) - value);
  return total / static_cast<double>(data.pixels.size());
}

RateVector dataset_rates(EsvaeModel& model, const Dataset& data, Index batch_size) {
  RateVector out(data.count, model.config().latent_dim);
  for (Index start = 0; start < data.count; start += batch_size) {
    const auto idx = range(start, std::min(data.count, start + batch_size));
    out.middleRows(start, static_cast<Index>(idx.size())) = encode_rates(model, data.gather(idx));
  }
  return out;
}

double probe_train_eval(const RateVector& train_rates, std::span<const int> train_labels,
                        const RateVector& test_rates, std::span<const int> test_labels, const ProbeConfig& cfg) {
  if (static_cast<Index>(train_labels.size()) != train_rates.rows() ||
      static_cast<Index>(test_labels.size()) != test_rates.rows()) {
    throw ValidationError("probe: label count does not match sample count");
  }
  if (train_rates.cols() != test_rates.cols()) throw ValidationError("probe: train/test feature sizes differ");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ValidationError("probe: invalid configuration");
  if (test_rates.rows() == 0) throw ValidationError("probe: empty test set");

  Rng rng(derive_seed(cfg.seed, "probe-init"));
  const std::vector<Index> widths{train_rates.cols(), 512, 256, 128, 10};
  std::vector<Tensorf> weights, biases, params;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Index in = widths[i], out = widths[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in));  // Kaiming-uniform for ReLU
    Buffer<float> w(out * in);
    for (Index k = 0; k < w.size(); ++k) w(k) = static_cast<float>(rng.uniform(-bound, bound));
    weights.emplace_back(Shape{out, in}, std::move(w), true);
    biases.push_back(Tensorf::zeros({out}, true));
    params.push_back(weights.back());
    params.push_back(biases.back());
  }
  auto forward = [&](const Tensorf& x) {
    Tensorf h = x;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      h = linear(h, weights[i], biases[i]);
      if (i + 1 < weights.size()) h = relu(h);
    }
    return h;
  };

  const Tensorf train_x = rates_tensor(train_rates);
  const Index d = train_rates.cols();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : make_batches(train_rates.rows(), cfg.batch_size, derive_seed(cfg.seed, "probe", epoch))) {
      Buffer<float> xb(static_cast<Index>(idx.size()) * d);
      std::vector<int> yb;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        xb.segment(static_cast<Index>(k) * d, d) = train_x.values().segment(idx[k] * d, d);
        yb.push_back(train_labels[static_cast<std::size_t>(idx[k])]);
      }
      Tape<float> tape;
      TapeScope<float> scope(tape);
      for (auto& p : params) p.zero_grad();
      const Tensorf loss = softmax_cross_entropy(forward(Tensorf({static_cast<Index>(idx.size()), d}, std::move(xb))),
                                                 std::span<const int>(yb));
      tape.backward(loss);
      sgd_step(params, cfg.lr);
    }
  }

  const Tensorf logits = forward(rates_tensor(test_rates));
  Index correct = 0;
  for (Index i = 0; i < test_rates.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < 10; ++k)
      if (logits[i * 10 + k] > logits[i * 10 + best]) best = k;
    correct += best == test_labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(correct) / static_cast<double>(test_rates.rows());
}

}  // namespace esvae
