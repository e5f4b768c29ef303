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

// Model hyperparameters and their line-based `key = value` text form.
//
//   # comment
//   steps = 16
//   arch_scale = desk
//
// Unknown keys and malformed values raise ConfigError. to_text() emits every
// key, so its output reproduces the configuration exactly when parsed back.

#ifndef ESVAE_CONFIG_HPP_
#define ESVAE_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "esvae/lif.hpp"

namespace esvae {

enum class ArchScale { full, desk };

struct ModelConfig {
  int steps = 16;
  double v_theta = 0.2;
  double decay = 0.25;
  double alpha = 0.5;
  int latent_dim = 128;
  double lambda_mmd = 1.0;
  double lr = 0.0006;
  double weight_decay = 0.001;
  double bottleneck_lr = 0.006;
  int epochs = 300;
  int batch_size = 64;
  ArchScale arch_scale = ArchScale::full;
  std::uint64_t seed = 0;

  int image_size = 32;
  int image_channels = 1;
  bool extra_layer = false;  // adds a fifth encoder/decoder stage (512 channels at full scale)
  double grad_clip = 5.0;    // global gradient norm; <= 0 disables clipping
  double mmd_sigma2 = 0.0;   // <= 0 selects the median heuristic per batch

  LIFParams lif() const { return {v_theta, decay, 0.0, alpha}; }

  // Throws ConfigError on inconsistent values.
  void validate() const;

  // Full scale with channel widths divided by 4 and the given time window.
  static ModelConfig desk(int steps = 8);
};

std::string to_string(ArchScale scale);

std::string to_text(const ModelConfig& cfg);

// Sets one key on `cfg`. Throws ConfigError for unknown keys or bad values.
void apply_setting(ModelConfig& cfg, std::string_view key, std::string_view value);

// Applies every `key = value` line of `text` on top of `base`.
ModelConfig parse_config(std::string_view text, ModelConfig base = {});

ModelConfig load_config(const std::string& path, ModelConfig base = {});

}  // namespace esvae

#endif  // ESVAE_CONFIG_HPP_
