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

#ifndef ESVAE_OPTIM_HPP_
#define ESVAE_OPTIM_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "esvae/tensor.hpp"

namespace esvae {

struct AdamWConfig {
  double lr = 0.0006;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamMoments {
  Buffer<Scalar> m;
  Buffer<Scalar> v;
};

// One AdamW update at 1-based step `step`. The decay theta -= lr*wd*theta is
// applied separately from the bias-corrected adaptive step.
template <typename Scalar>
void adamw_step(Buffer<Scalar>& params, const Buffer<Scalar>& grads, AdamMoments<Scalar>& moments, long step,
                const AdamWConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (step < 1) throw ContractError("adamw_step: step counts from 1");
  if (moments.m.size() != params.size()) moments.m = Buffer<Scalar>::Zero(params.size());
  if (moments.v.size() != params.size()) moments.v = Buffer<Scalar>::Zero(params.size());
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  params *= Scalar(1) - lr * static_cast<Scalar>(cfg.weight_decay);
  moments.m = b1 * moments.m + (Scalar(1) - b1) * grads;
  moments.v = b2 * moments.v + (Scalar(1) - b2) * grads.square();
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(step)));
  params -= lr * (moments.m / c1) / ((moments.v / c2).sqrt() + static_cast<Scalar>(cfg.eps));
}

// AdamW over parameter groups sharing one step counter.
template <typename Scalar>
class AdamW {
 public:
  struct Group {
    std::vector<Tensor<Scalar>> params;
    AdamWConfig config;
  };

  void add_group(std::vector<Tensor<Scalar>> params, AdamWConfig config) {
    Group g{std::move(params), config};
    for (std::size_t i = 0; i < g.params.size(); ++i) moments_.emplace_back();
    groups_.push_back(std::move(g));
  }

  // Parameters without a gradient are treated as having a zero gradient.
  void step() {
    ++step_;
    std::size_t k = 0;
    for (auto& g : groups_) {
      for (auto& p : g.params) {
        if (p.has_grad()) {
          adamw_step(p.values(), p.grad(), moments_[k], step_, g.config);
        } else {
          adamw_step<Scalar>(p.values(), Buffer<Scalar>::Zero(p.size()), moments_[k], step_, g.config);
        }
        ++k;
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p.zero_grad();
  }

  long step_count() const { return step_; }
  void set_step_count(long step) { step_ = step; }
  std::vector<Group>& groups() { return groups_; }
  // Moments in parameter order across groups.
  std::vector<AdamMoments<Scalar>>& moments() { return moments_; }

 private:
  std::vector<Group> groups_;
  std::vector<AdamMoments<Scalar>> moments_;
  long step_ = 0;
};

// Plain stochastic gradient descent.
template <typename Scalar>
void sgd_step(std::vector<Tensor<Scalar>>& params, double lr) {
  for (auto& p : params) {
    if (p.has_grad()) p.values() -= static_cast<Scalar>(lr) * p.grad();
  }
}

// Rescales all gradients so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
template <typename Scalar>
double clip_grad_norm(std::vector<Tensor<Scalar>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad()) sq += p.grad().template cast<double>().square().sum();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (auto& p : params)
      if (p.has_grad()) p.grad() *= factor;
  }
  return norm;
}

}  // namespace esvae

#endif  // ESVAE_OPTIM_HPP_
