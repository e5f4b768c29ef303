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


#include "esvae/experiments.hpp"

#include <algorithm>

#include "esvae/random.hpp"

namespace esvae {

namespace {

double squared_error(const Tensorf& a, const Tensorf& b) {
  return (a.values().cast<double>() - b.values().cast<double>()).square().sum();
}

std::vector<Index> span_of(Index begin, Index end) {
  std::vector<Index> idx;
  for (Index i = begin; i < end; ++i) idx.push_back(i);
  return idx;
}

// Appends up to `keep` leading images of `src` to `dst`.
void keep_head(Tensorf& dst, const Tensorf& src, Index keep) {
  const Index have = dst.defined() ? dst.dim(0) : 0;
  const Index take = std::min(keep - have, src.dim(0));
  if (take <= 0) return;
  const Index sz = src.size() / src.dim(0);
  Buffer<float> v(have * sz + take * sz);
  if (have > 0) v.head(have * sz) = dst.values();
  v.tail(take * sz) = src.values().head(take * sz);
  dst = Tensorf({have + take, src.dim(1), src.dim(2), src.dim(3)}, std::move(v));
}

void require_data(const Dataset& data, const char* what) {
  if (data.count == 0) throw ValidationError(std::string(what) + ": dataset is empty");
}

}  // namespace

ShuffleDim parse_shuffle_dim(const std::string& name) {
  if (name == "time") return ShuffleDim::time;
  if (name == "length") return ShuffleDim::length;
  throw ConfigError("shuffle dimension must be 'time' or 'length', got '" + name + "'");
}

ShuffleResult shuffle_test(EsvaeModel& model, const Dataset& data, ShuffleDim dim, std::uint64_t seed,
                           Index batch_size, Index keep) {
  require_data(data, "shuffle_test");
  ShuffleResult out;
  double vo = 0.0, so = 0.0, sv = 0.0;
  for (Index start = 0; start < data.count; start += batch_size) {
    const Tensorf x = data.gather(span_of(start, std::min(data.count, start + batch_size)));
    const std::uint64_t s = static_cast<std::uint64_t>(start);
    const Reconstruction r = reconstruct(model, x, derive_seed(seed, "shuffle-draw", s));
    const SpikeTrain shuffled = dim == ShuffleDim::time ? shuffle_time(r.latent, derive_seed(seed, "shuffle-time", s))
                                                        : shuffle_length(r.latent, derive_seed(seed, "shuffle-length"));
    const Tensorf y = decode_latent(model, shuffled);
    vo += squared_error(r.images, x);
    so += squared_error(y, x);
    sv += squared_error(y, r.images);
    keep_head(out.original, x, keep);
    keep_head(out.vanilla, r.images, keep);
    keep_head(out.shuffled, y, keep);
  }
  const double n = static_cast<double>(data.count * data.image_size());
  out.vanilla_vs_original = vo / n;
  out.shuffled_vs_original = so / n;
  out.shuffled_vs_vanilla = sv / n;
  return out;
}

std::vector<NoisePoint> noise_test(EsvaeModel& model, const Dataset& data, std::span<const double> probs,
                                   std::uint64_t seed, Index batch_size) {
  require_data(data, "noise_test");
  if (probs.empty()) throw ValidationError("noise_test: empty probability list");
  for (double p : probs)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("noise_test: probability " + std::to_string(p) + " outside [0, 1]");
  std::vector<NoisePoint> out(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) out[k].flip_probability = probs[k];
  for (Index start = 0; start < data.count; start += batch_size) {
    const Tensorf x = data.gather(span_of(start, std::min(data.count, start + batch_size)));
    const std::uint64_t s = static_cast<std::uint64_t>(start);
    const Reconstruction r = reconstruct(model, x, derive_seed(seed, "noise-draw", s));
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const Tensorf y = decode_latent(model, perturb_spikes(r.latent, probs[k], derive_seed(seed, "noise-flip", s)));
      out[k].vs_original += squared_error(y, x);
      out[k].vs_vanilla += squared_error(y, r.images);
    }
  }
  const double n = static_cast<double>(data.count * data.image_size());
  for (auto& p : out) {
    p.vs_original /= n;
    p.vs_vanilla /= n;
  }
  return out;
}

std::vector<LayerFlops> layer_flops(const std::vector<LayerInfo>& layers) {
  std::vector<LayerFlops> out;
  for (const auto& l : layers) {
    LayerFlops f;
    f.name = l.name;
    f.part = l.part;
    f.spiking_input = l.spiking_input;
    f.add = l.macs();
    f.mul = l.spiking_input ? 0.0 : l.macs();
    out.push_back(f);
  }
  return out;
}

EnergyReport model_energy(const std::vector<LayerFlops>& flops, double rate, long steps, bool spiking) {
  double add = 0.0, mul = 0.0;
  for (const auto& f : flops) {
    add += f.add;
    mul += f.mul;
  }
  return energy_report(add, mul, rate, steps, spiking);
}

}  // namespace esvae
