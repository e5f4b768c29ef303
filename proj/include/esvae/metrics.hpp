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

#ifndef ESVAE_METRICS_HPP_
#define ESVAE_METRICS_HPP_

#include <vector>

#include "esvae/poisson.hpp"

namespace esvae {

// Energy per operation (joules).
inline constexpr double kFloatOpEnergy = 4.6e-12;
inline constexpr double kSynapticOpEnergy = 0.9e-12;

struct EnergyReport {
  double flops_add = 0.0;
  double flops_mul = 0.0;
  double avg_rate = 0.0;
  long steps = 0;
  bool spiking = true;
  double sops = 0.0;  // avg_rate * steps * (flops_add + flops_mul); 0 for non-spiking layers
  double energy_joules = 0.0;
};

// Spiking: energy = r * T * FLOPs * 0.9 pJ. Non-spiking: energy = FLOPs * 4.6 pJ.
// SOPs are kept unrounded.
EnergyReport energy_report(double flops_add, double flops_mul, double avg_rate, long steps, bool spiking);

struct Histogram {
  std::vector<double> edges;      // bins + 1 edges spanning [0, 1]
  std::vector<double> frequency;  // normalized, sums to 1 when nonempty
  long count = 0;
};

// Normalized histogram of every rate over [0, 1] with equal-width bins; bin
// k covers [k/bins, (k+1)/bins) and the last bin also includes 1.
Histogram rate_histogram(const RateVector& rates, int bins);

}  // namespace esvae

#endif  // ESVAE_METRICS_HPP_
