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

#include "esvae/model.hpp"

#include <cmath>

#include "esvae/coding.hpp"
#include "esvae/lif.hpp"
#include "esvae/ops.hpp"
#include "esvae/poisson.hpp"
#include "esvae/random.hpp"

namespace esvae {

namespace {

constexpr Index kKernel = 3;

std::vector<Index> stage_channels(const ModelConfig& cfg) {
  std::vector<Index> ch{32, 64, 128, 256};
  if (cfg.extra_layer) ch.push_back(512);
  if (cfg.arch_scale == ArchScale::desk)
    for (auto& c : ch) c /= 4;
  return ch;
}

// Kaiming-normal fan-in initialization.
Tensorf kaiming(Shape shape, Index fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Buffer<float> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = static_cast<float>(rng.normal() * std_dev);
  return Tensorf(std::move(shape), std::move(v), true);
}

}  // namespace

double LayerInfo::macs() const {
  const double k2 = static_cast<double>(kernel * kernel);
  switch (kind) {
    case LayerKind::conv:
      return static_cast<double>(out_channels * out_h * out_w * in_channels) * k2;
    case LayerKind::conv_transpose:
      return static_cast<double>(in_channels * in_h * in_w * out_channels) * k2;
    case LayerKind::linear:
      return static_cast<double>(in_channels * out_channels);
  }
  return 0.0;
}

EsvaeModel::EsvaeModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, "init"));
  const auto channels = stage_channels(cfg_);
  const Index stages = static_cast<Index>(channels.size());
  const float gamma0 = static_cast<float>(cfg_.v_theta);
  bottom_channels_ = channels.back();
  bottom_size_ = cfg_.image_size >> stages;
  const Index latent = cfg_.latent_dim;

  auto make_unit = [&](LayerInfo info, Shape weight_shape, Index fan_in) {
    SpikingUnit u;
    u.info = std::move(info);
    u.weight = kaiming(std::move(weight_shape), fan_in, rng);
    u.gamma = Tensorf::full({u.info.out_channels}, gamma0, true);
    u.beta = Tensorf::zeros({u.info.out_channels}, true);
    u.stats = NormStats<float>(u.info.out_channels);
    return u;
  };

  Index size = cfg_.image_size;
  Index in_ch = cfg_.image_channels;
  for (Index i = 0; i < stages; ++i) {
    LayerInfo info{"encoder.conv" + std::to_string(i), LayerKind::conv, "encoder", in_ch, channels[i], size, size,
                   size / 2, size / 2, kKernel, i > 0, true, false};
    encoder_.push_back(make_unit(info, {channels[i], in_ch, kKernel, kKernel}, in_ch * kKernel * kKernel));
    in_ch = channels[i];
    size /= 2;
  }
  const Index flat = bottom_channels_ * bottom_size_ * bottom_size_;
  encoder_.push_back(make_unit(
      LayerInfo{"encoder.fc", LayerKind::linear, "encoder", flat, latent, 1, 1, 1, 1, 1, true, true, false},
      {latent, flat}, flat));

  decoder_.push_back(make_unit(
      LayerInfo{"decoder.fc", LayerKind::linear, "decoder", latent, flat, 1, 1, 1, 1, 1, true, true, false},
      {flat, latent}, latent));
  for (Index i = stages - 1; i >= 0; --i) {
    const Index from = channels[i], to = channels[i > 0 ? i - 1 : 0];
    LayerInfo info{"decoder.tconv" + std::to_string(stages - 1 - i), LayerKind::conv_transpose, "decoder", from, to,
                   size, size, size * 2, size * 2, kKernel, true, true, false};
    decoder_.push_back(make_unit(info, {from, to, kKernel, kKernel}, from * kKernel * kKernel));
    size *= 2;
  }

  readout_info_ = LayerInfo{"decoder.readout", LayerKind::conv, "decoder", channels[0], cfg_.image_channels, size,
                            size, size, size, kKernel, true, false, true};
  readout_kernel_ = kaiming({cfg_.image_channels, channels[0], kKernel, kKernel}, channels[0] * kKernel * kKernel, rng);
  readout_bias_ = Tensorf::zeros({cfg_.image_channels}, true);

  prior_info_ = LayerInfo{"prior.fc", LayerKind::linear, "prior", latent, latent, 1, 1, 1, 1, 1, false, false, true};
  prior_weight_ = kaiming({latent, latent}, latent, rng);
  prior_bias_ = Tensorf::zeros({latent}, true);

  for (auto& u : encoder_) register_unit(u);
  for (auto& u : decoder_) register_unit(u);
  params_.push_back({readout_info_.name + ".weight", readout_kernel_, ParamGroup::body});
  params_.push_back({readout_info_.name + ".bias", readout_bias_, ParamGroup::body});
  params_.push_back({prior_info_.name + ".weight", prior_weight_, ParamGroup::bottleneck});
  params_.push_back({prior_info_.name + ".bias", prior_bias_, ParamGroup::bottleneck});
  layers_.push_back(readout_info_);
  layers_.push_back(prior_info_);
}

void EsvaeModel::register_unit(SpikingUnit& unit) {
  params_.push_back({unit.info.name + ".weight", unit.weight, ParamGroup::body});
  params_.push_back({unit.info.name + ".gamma", unit.gamma, ParamGroup::body});
  params_.push_back({unit.info.name + ".beta", unit.beta, ParamGroup::body});
  layers_.push_back(unit.info);
}

Tensorf EsvaeModel::normalize(SpikingUnit& unit, const Tensorf& x, bool training) {
  if (training) return tdbn_forward(x, unit.gamma, unit.beta, NormMode::train, &unit.stats);
  if (unit.stats.initialized) return tdbn_forward(x, unit.gamma, unit.beta, NormMode::eval, &unit.stats);
  // An untrained model normalizes with batch statistics and leaves its state untouched.
  return tdbn_forward<float>(x, unit.gamma, unit.beta, NormMode::train, nullptr);
}

Tensorf EsvaeModel::run_unit(SpikingUnit& unit, const Tensorf& x, bool training) {
  Tensorf current;
  switch (unit.info.kind) {
    case LayerKind::conv:
      current = conv2d(x, unit.weight, 2, 1);
      break;
    case LayerKind::conv_transpose:
      current = conv2d_transpose(x, unit.weight, 2, 1);
      break;
    case LayerKind::linear:
      current = linear(x, unit.weight, Tensorf());
      break;
  }
  return lif_sequence(normalize(unit, current, training), cfg_.steps, cfg_.lif());
}

Tensorf EsvaeModel::encode(const Tensorf& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != cfg_.image_channels || images.dim(2) != cfg_.image_size ||
      images.dim(3) != cfg_.image_size) {
    throw ConfigError("model expects images of shape (B," + std::to_string(cfg_.image_channels) + "," +
                      std::to_string(cfg_.image_size) + "," + std::to_string(cfg_.image_size) + "), got " +
                      to_string(images.shape()));
  }
  Tensorf x = encode_input(images, cfg_.steps);
  for (std::size_t i = 0; i + 1 < encoder_.size(); ++i) x = run_unit(encoder_[i], x, training);
  x = reshape(x, {x.dim(0), x.size() / x.dim(0)});
  return run_unit(encoder_.back(), x, training);
}

Tensorf EsvaeModel::decode(const Tensorf& latent_spikes, bool training) {
  if (latent_spikes.rank() != 2 || latent_spikes.dim(1) != cfg_.latent_dim ||
      latent_spikes.dim(0) % cfg_.steps != 0) {
    throw DimensionError("decode: expected (T*B, " + std::to_string(cfg_.latent_dim) + ") spikes, got " +
                         to_string(latent_spikes.shape()));
  }
  Tensorf x = run_unit(decoder_.front(), latent_spikes, training);
  x = reshape(x, {x.dim(0), bottom_channels_, bottom_size_, bottom_size_});
  for (std::size_t i = 1; i < decoder_.size(); ++i) x = run_unit(decoder_[i], x, training);
  Tensorf current = add_bias(conv2d(x, readout_kernel_, 1, 1), readout_bias_);
  return decode_output(current, cfg_.steps);
}

Tensorf EsvaeModel::prior(const Tensorf& noise) const { return prior_rates(noise, prior_weight_, prior_bias_); }

Index EsvaeModel::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

std::vector<EsvaeModel::NamedStats> EsvaeModel::norm_stats() {
  std::vector<NamedStats> out;
  for (auto& u : encoder_) out.push_back({u.info.name, &u.stats});
  for (auto& u : decoder_) out.push_back({u.info.name, &u.stats});
  return out;
}

void EsvaeModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

EsvaeModel build_model(const ModelConfig& cfg) { return EsvaeModel(cfg); }

}  // namespace esvae
