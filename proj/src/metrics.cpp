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

#include "esvae/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace esvae {

EnergyReport energy_report(double flops_add, double flops_mul, double avg_rate, long steps, bool spiking) {
  if (flops_add < 0.0 || flops_mul < 0.0) throw ValidationError("energy_report: operation counts must be nonnegative");
  if (!(avg_rate >= 0.0 && avg_rate <= 1.0)) throw ValidationError("energy_report: average rate must lie in [0, 1]");
  if (steps < 0) throw ValidationError("energy_report: time window must be nonnegative");
  EnergyReport r;
  r.flops_add = flops_add;
  r.flops_mul = flops_mul;
  r.avg_rate = avg_rate;
  r.steps = steps;
  r.spiking = spiking;
  const double flops = flops_add + flops_mul;
  if (spiking) {
    r.sops = avg_rate * static_cast<double>(steps) * flops;
    r.energy_joules = r.sops * kSynapticOpEnergy;
  } else {
    r.energy_joules = flops * kFloatOpEnergy;
  }
  return r;
}

Histogram rate_histogram(const RateVector& rates, int bins) {
  if (bins < 2) throw ValidationError("rate_histogram: need at least two bins");
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) h.edges[static_cast<std::size_t>(k)] = static_cast<double>(k) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < rates.size(); ++i) {
    const double r = rates.data()[i];
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("rate_histogram: rate outside [0, 1]");
    const int k = std::min(bins - 1, static_cast<int>(std::floor(r * bins)));
    ++counts[static_cast<std::size_t>(k)];
  }
  h.count = static_cast<long>(rates.size());
  h.frequency.assign(static_cast<std::size_t>(bins), 0.0);
  if (h.count > 0) {
    for (int k = 0; k < bins; ++k)
      h.frequency[static_cast<std::size_t>(k)] =
          static_cast<double>(counts[static_cast<std::size_t>(k)]) / static_cast<double>(h.count);
  }
  return h;
}

}  // namespace esvae
