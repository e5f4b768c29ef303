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

// Spiking VAE: convolutional LIF encoder, firing-rate latent, mirrored
// transposed-convolution decoder with a non-spiking readout, and the
// noise-to-rate bottleneck that acts as the learned prior.
//
// Full scale (32x32 input):
//   encoder  32C3 - 64C3 - 128C3 - 256C3 (stride 2, pad 1) - flatten - 128FC
//   decoder  128FC - reshape 256x2x2 - 128T3 - 64T3 - 32T3 - 32T3 (stride 2)
//            - imageC3 readout (stride 1)
//   prior    128FC + sigmoid
// tdBN and LIF follow every convolution and FC layer except the readout and
// the prior. Desk scale divides channel widths by 4.

#ifndef ESVAE_MODEL_HPP_
#define ESVAE_MODEL_HPP_

#include <string>
#include <vector>

#include "esvae/config.hpp"
#include "esvae/tdbn.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

enum class ParamGroup { body, bottleneck };

struct Parameter {
  std::string name;
  Tensorf tensor;
  ParamGroup group = ParamGroup::body;
};

enum class LayerKind { conv, conv_transpose, linear };

// Static description of one synaptic layer, used for FLOP accounting.
struct LayerInfo {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::string part;  // "encoder", "decoder" or "prior"
  Index in_channels = 0, out_channels = 0;
  Index in_h = 1, in_w = 1, out_h = 1, out_w = 1;
  Index kernel = 1;
  bool spiking_input = true;   // driven by spikes (vs real-valued input)
  bool spiking_output = true;  // followed by tdBN + LIF
  bool bias = false;

  // Multiply-accumulates per time step for one sample.
  double macs() const;
};

class EsvaeModel {
 public:
  explicit EsvaeModel(const ModelConfig& cfg);
  EsvaeModel(const EsvaeModel&) = delete;
  EsvaeModel& operator=(const EsvaeModel&) = delete;
  EsvaeModel(EsvaeModel&&) = default;
  EsvaeModel& operator=(EsvaeModel&&) = default;

  const ModelConfig& config() const { return cfg_; }

  // images (B, C, H, W) in [0, 1] -> encoder spikes (T*B, latent_dim).
  Tensorf encode(const Tensorf& images, bool training);

  // latent spikes (T*B, latent_dim) -> images (B, C, H, W) in (0, 1).
  Tensorf decode(const Tensorf& latent_spikes, bool training);

  // noise (B, latent_dim) -> prior rates (B, latent_dim) in (0, 1).
  Tensorf prior(const Tensorf& noise) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Index parameter_count() const;

  // Running tdBN statistics, named like the layer parameters.
  struct NamedStats {
    std::string name;
    NormStats<float>* stats;
  };
  std::vector<NamedStats> norm_stats();

  const std::vector<LayerInfo>& layers() const { return layers_; }

  void zero_grad();

 private:
  struct SpikingUnit {
    LayerInfo info;
    Tensorf weight;
    Tensorf gamma;
    Tensorf beta;
    NormStats<float> stats;
  };

  Tensorf run_unit(SpikingUnit& unit, const Tensorf& x, bool training);
  Tensorf normalize(SpikingUnit& unit, const Tensorf& x, bool training);
  void register_unit(SpikingUnit& unit);

  ModelConfig cfg_;
  std::vector<SpikingUnit> encoder_;
  std::vector<SpikingUnit> decoder_;
  LayerInfo readout_info_;
  Tensorf readout_kernel_;
  Tensorf readout_bias_;
  LayerInfo prior_info_;
  Tensorf prior_weight_;
  Tensorf prior_bias_;
  std::vector<Parameter> params_;
  std::vector<LayerInfo> layers_;
  Index bottom_size_ = 0;
  Index bottom_channels_ = 0;
};

// Builds an initialized model; equivalent to EsvaeModel(cfg).
EsvaeModel build_model(const ModelConfig& cfg);

}  // namespace esvae

#endif  // ESVAE_MODEL_HPP_
