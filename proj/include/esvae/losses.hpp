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

// Training objective: mean-squared reconstruction error plus lambda times the
// squared maximum mean discrepancy between posterior and prior rate batches.

#ifndef ESVAE_LOSSES_HPP_
#define ESVAE_LOSSES_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "esvae/ops.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

// mean((x - target)^2) over every element.
template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& target) {
  detail::require_same_shape(x, target, "mse_loss");
  if (x.size() == 0) throw ValidationError("mse_loss: empty input");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(x.size());
  auto diff = std::make_shared<Buffer<Scalar>>(x.values() - target.values());
  Buffer<Scalar> v = Buffer<Scalar>::Constant(1, diff->square().sum() * inv_n);
  return detail::record_op<Scalar>(
      Shape{1}, std::move(v), {&x, &target},
      [px = x.node_ptr(), pt = target.node_ptr(), diff, inv_n](const NodePtr<Scalar>& out) {
        return [px, pt, out, diff, inv_n] {
          const Scalar k = Scalar(2) * inv_n * out->grad(0);
          detail::accumulate<Scalar>(px, *diff * k);
          detail::accumulate<Scalar>(pt, *diff * (-k));
        };
      });
}

// exp(-||a - b||^2 / (2 sigma2)).
template <typename Derived1, typename Derived2>
double rbf_kernel(const Eigen::ArrayBase<Derived1>& a, const Eigen::ArrayBase<Derived2>& b, double sigma2) {
  if (!(sigma2 > 0.0)) throw ValidationError("rbf_kernel: bandwidth must be positive");
  if (a.size() != b.size()) throw DimensionError("rbf_kernel: vectors of different length");
  return std::exp(-(a.template cast<double>() - b.template cast<double>()).square().sum() / (2.0 * sigma2));
}

// Median of the pairwise squared distances within the pooled rows of P and
// Q (each (n, d)), used as the kernel bandwidth sigma^2. Falls back to 1
// when every pooled row coincides.
template <typename Scalar>
double median_bandwidth(const Tensor<Scalar>& p, const Tensor<Scalar>& q) {
  detail::require_rank(p, 2, "median_bandwidth");
  detail::require_rank(q, 2, "median_bandwidth");
  if (p.dim(1) != q.dim(1)) throw DimensionError("median_bandwidth: feature sizes differ");
  const Index d = p.dim(1), np = p.dim(0), total = p.dim(0) + q.dim(0);
  auto row = [&](Index i) -> const Scalar* {
    return i < np ? p.values().data() + i * d : q.values().data() + (i - np) * d;
  };
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(total * (total - 1) / 2));
  for (Index i = 0; i < total; ++i) {
    for (Index j = i + 1; j < total; ++j) {
      double s = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double diff = static_cast<double>(row(i)[k]) - static_cast<double>(row(j)[k]);
        s += diff * diff;
      }
      dist.push_back(s);
    }
  }
  if (dist.empty()) return 1.0;
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

// Biased (V-statistic) MMD^2 between row sets p (n, d) and q (m, d) under an
// RBF kernel with bandwidth sigma2:
//   mean k(p, p') + mean k(q, q') - 2 mean k(p, q).
// Differentiable in both inputs; sigma2 is treated as a constant.
template <typename Scalar>
Tensor<Scalar> mmd_squared(const Tensor<Scalar>& p, const Tensor<Scalar>& q, double sigma2) {
  detail::require_rank(p, 2, "mmd_squared");
  detail::require_rank(q, 2, "mmd_squared");
  if (p.dim(0) == 0 || q.dim(0) == 0) throw ValidationError("mmd_squared: empty batch");
  if (p.dim(1) != q.dim(1)) {
    throw DimensionError("mmd_squared: feature sizes differ " + to_string(p.shape()) + " vs " + to_string(q.shape()));
  }
  if (!(sigma2 > 0.0)) throw ValidationError("mmd_squared: bandwidth must be positive");
  const Index n = p.dim(0), m = q.dim(0), d = p.dim(1);
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Gram = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const double two_s2 = 2.0 * sigma2;
  // Plain sequential sums in double, so the value is reproducible term by term.
  double acc = 0.0;
  auto gram = [&](const Scalar* a, Index na, const Scalar* b, Index nb) {
    auto k = std::make_shared<Gram>(na, nb);
    acc = 0.0;
    for (Index i = 0; i < na; ++i) {
      for (Index j = 0; j < nb; ++j) {
        double sq = 0.0;
        for (Index c = 0; c < d; ++c) {
          const double diff = static_cast<double>(a[i * d + c]) - static_cast<double>(b[j * d + c]);
          sq += diff * diff;
        }
        (*k)(i, j) = std::exp(-sq / two_s2);
        acc += (*k)(i, j);
      }
    }
    return k;
  };
  const Scalar* pv = p.values().data();
  const Scalar* qv = q.values().data();
  auto kpp = gram(pv, n, pv, n);
  const double spp = acc;
  auto kqq = gram(qv, m, qv, m);
  const double sqq = acc;
  auto kpq = gram(pv, n, qv, m);
  const double spq = acc;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const Scalar value = static_cast<Scalar>(spp / (nn * nn) + sqq / (mm * mm) - 2.0 * spq / (nn * mm));

  return detail::record_op<Scalar>(
      Shape{1}, Buffer<Scalar>::Constant(1, value), {&p, &q},
      [pp = p.node_ptr(), pq = q.node_ptr(), kpp, kqq, kpq, n, m, d, sigma2](const NodePtr<Scalar>& out) {
        return [pp, pq, out, kpp, kqq, kpq, n, m, d, sigma2] {
          const Scalar g = out->grad(0);
          const Scalar inv_s2 = static_cast<Scalar>(1.0 / sigma2);
          const Scalar nn = static_cast<Scalar>(n), mm = static_cast<Scalar>(m);
          Eigen::Map<const Mat> pm(pp->value.data(), n, d), qm(pq->value.data(), m, d);
          // d k(a, b) / d a = -k(a, b) (a - b) / sigma2
          auto k = [](const auto& gram, Index i, Index j) { return static_cast<Scalar>(gram(i, j)); };
          if (pp->requires_grad) {
            Eigen::Map<Mat> gp(pp->grad_buffer().data(), n, d);
            for (Index i = 0; i < n; ++i) {
              for (Index j = 0; j < n; ++j)
                gp.row(i) -= (g * Scalar(2) / (nn * nn) * k(*kpp, i, j) * inv_s2) * (pm.row(i) - pm.row(j));
              for (Index j = 0; j < m; ++j)
                gp.row(i) += (g * Scalar(2) / (nn * mm) * k(*kpq, i, j) * inv_s2) * (pm.row(i) - qm.row(j));
            }
          }
          if (pq->requires_grad) {
            Eigen::Map<Mat> gq(pq->grad_buffer().data(), m, d);
            for (Index j = 0; j < m; ++j) {
              for (Index i = 0; i < m; ++i)
                gq.row(j) -= (g * Scalar(2) / (mm * mm) * k(*kqq, j, i) * inv_s2) * (qm.row(j) - qm.row(i));
              for (Index i = 0; i < n; ++i)
                gq.row(j) += (g * Scalar(2) / (nn * mm) * k(*kpq, i, j) * inv_s2) * (qm.row(j) - pm.row(i));
            }
          }
        };
      });
}

struct LossReport {
  double mse = 0.0;
  double mmd2 = 0.0;
  double total = 0.0;
  double lambda = 1.0;
};

template <typename Scalar>
struct LossTerms {
  Tensor<Scalar> mse;
  Tensor<Scalar> mmd2;
  Tensor<Scalar> total;

  LossReport report(double lambda) const {
    return {static_cast<double>(mse.item()), static_cast<double>(mmd2.item()), static_cast<double>(total.item()),
            lambda};
  }
};

// total = mse(reconstruction, image) + lambda * mmd^2(posterior, prior).
// A non-positive sigma2 selects the median heuristic on the pooled batch.
template <typename Scalar>
LossTerms<Scalar> total_loss(const Tensor<Scalar>& image, const Tensor<Scalar>& reconstruction,
                             const Tensor<Scalar>& posterior_rates, const Tensor<Scalar>& prior,
                             double lambda, double sigma2 = 0.0) {
  LossTerms<Scalar> terms;
  terms.mse = mse_loss(reconstruction, image);
  if (!(sigma2 > 0.0)) sigma2 = median_bandwidth(posterior_rates, prior);
  terms.mmd2 = mmd_squared(posterior_rates, prior, sigma2);
  terms.total = add(terms.mse, scale(terms.mmd2, static_cast<Scalar>(lambda)));
  return terms;
}

// Mean softmax cross-entropy of logits (N, K) against integer labels.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "softmax_cross_entropy");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw ValidationError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " rows");
  }
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> z(logits.values().data(), n, k);
  auto probs = std::make_shared<Mat>(n, k);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  Scalar loss = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = (*targets)[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ValidationError("softmax_cross_entropy: label out of range");
    const Scalar zmax = z.row(i).maxCoeff();
    probs->row(i) = (z.row(i).array() - zmax).exp().matrix();
    const Scalar total = probs->row(i).sum();
    probs->row(i) /= total;
    loss -= z(i, y) - zmax - std::log(total);
  }
  loss /= static_cast<Scalar>(n);
  return detail::record_op<Scalar>(Shape{1}, Buffer<Scalar>::Constant(1, loss), {&logits},
                                   [pz = logits.node_ptr(), probs, targets, n, k](const NodePtr<Scalar>& out) {
                                     return [pz, out, probs, targets, n, k] {
                                       if (!pz->requires_grad) return;
                                       Mat g = *probs;
                                       for (Index i = 0; i < n; ++i) g(i, (*targets)[static_cast<std::size_t>(i)]) -= 1;
                                       g *= out->grad(0) / static_cast<Scalar>(n);
                                       Eigen::Map<Mat>(pz->grad_buffer().data(), n, k) += g;
                                     };
                                   });
}

}  // namespace esvae

#endif  // ESVAE_LOSSES_HPP_
