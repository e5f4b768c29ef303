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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "esvae/poisson.hpp"
#include "test_support.hpp"

namespace esvae {
namespace {

using testing::check_gradients;
using testing::random_tensor;

SpikeTrain train_from_rows(const std::vector<std::vector<int>>& rows) {
  SpikeTrain z(1, static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (Index i = 0; i < z.neurons; ++i)
    for (Index t = 0; t < z.steps; ++t) z.at(0, i, t) = static_cast<std::uint8_t>(rows[i][t]);
  return z;
}

SamplerDraw fixed_draw(std::vector<double> u, Index batch, Index neurons, Index steps) {
  SamplerDraw d;
  d.batch = batch;
  d.neurons = neurons;
  d.steps = steps;
  d.u = Eigen::Map<Buffer<double>>(u.data(), static_cast<Index>(u.size()));
  return d;
}

RateVector rates_of(std::initializer_list<double> r) {
  RateVector v(1, static_cast<Index>(r.size()));
  Index i = 0;
  for (double x : r) v(0, i++) = x;
  return v;
}

TEST(FiringRate, CountsOverTime) {
  const RateVector r = firing_rate(train_from_rows({{1, 0, 1, 0}, {1, 1, 1, 1}}));
  EXPECT_EQ(r(0, 0), 0.5);
  EXPECT_EQ(r(0, 1), 1.0);
  EXPECT_TRUE((firing_rate(SpikeTrain(2, 3, 5)) == 0.0).all());
  SpikeTrain half(1, 1, 16);
  for (Index t = 0; t < 8; ++t) half.at(0, 0, t) = 1;
  EXPECT_EQ(firing_rate(half)(0, 0), 0.5);
}

TEST(FiringRate, RejectsNonBinary) {
  SpikeTrain z(1, 1, 2);
  z.at(0, 0, 1) = 2;
  EXPECT_THROW(firing_rate(z), ValidationError);
}

TEST(Sampler, BoundaryRates) {
  const SamplerDraw draw = SamplerDraw::generate(1, 2, 16, 99);
  const SpikeTrain z = sample_spikes(rates_of({0.0, 1.0}), draw);
  EXPECT_EQ(z.count(0, 0), 0);
  EXPECT_EQ(z.count(0, 1), 16);
}

TEST(Sampler, ThresholdComparison) {
  const SamplerDraw draw = fixed_draw({0.3, 0.6, 0.9, 0.1}, 1, 1, 4);
  const SpikeTrain z = sample_spikes(rates_of({0.5}), draw);
  const int expected[4] = {1, 0, 0, 1};
  for (Index t = 0; t < 4; ++t) EXPECT_EQ(z.at(0, 0, t), expected[t]);
  EXPECT_EQ(z.draw_seed, draw.seed);
}

TEST(Sampler, ShapeMismatch) {
  EXPECT_THROW(sample_spikes(rates_of({0.5, 0.5}), SamplerDraw::generate(1, 3, 4, 0)), DimensionError);
}

TEST(Sampler, DrawReproducibleAndInUnitInterval) {
  const SamplerDraw a = SamplerDraw::generate(3, 4, 8, 1234), b = SamplerDraw::generate(3, 4, 8, 1234);
  const SamplerDraw c = SamplerDraw::generate(3, 4, 8, 1235);
  EXPECT_TRUE((a.u == b.u).all());
  EXPECT_FALSE((a.u == c.u).all());
  EXPECT_GE(a.u.minCoeff(), 0.0);
  EXPECT_LT(a.u.maxCoeff(), 1.0);
}

TEST(Sampler, MeanCountQuarterRate) {
  const Index draws = 10000, steps = 16;
  RateVector r = RateVector::Constant(draws, 1, 0.25);
  const SpikeTrain z = sample_spikes(r, SamplerDraw::generate(draws, 1, steps, 7));
  double total = 0;
  for (Index b = 0; b < draws; ++b) total += static_cast<double>(z.count(b, 0));
  const double se = std::sqrt(16 * 0.25 * 0.75 / static_cast<double>(draws));
  EXPECT_NEAR(total / draws, 4.0, 3 * se);
}

TEST(Sampler, RateConsistencyGrid) {
  const Index draws = 10000, steps = 16;
  for (int k = 0; k <= 10; ++k) {
    const double rate = k / 10.0;
    const SpikeTrain z =
        sample_spikes(RateVector::Constant(draws, 1, rate), SamplerDraw::generate(draws, 1, steps, 100 + k));
    const double mean = firing_rate(z).mean();
    const double se = std::sqrt(rate * (1 - rate) / static_cast<double>(draws * steps));
    EXPECT_LE(std::abs(mean - rate), 3 * se + 1e-12) << "r=" << rate;
  }
}

TEST(SamplerBackward, HandEvaluation) {
  const SamplerDraw draw = fixed_draw({0.3, 0.6, 0.9, 0.1}, 1, 1, 4);
  EXPECT_DOUBLE_EQ(sampler_backward(rates_of({0.5}), draw, 0.5)(0, 0), 4.0);
  const SamplerDraw far = fixed_draw({0.0, 0.05, 0.95, 1.0}, 1, 1, 4);
  EXPECT_EQ(sampler_backward(rates_of({0.5}), far, 0.5)(0, 0), 0.0);
}

TEST(SamplerBackward, SeedMismatchIsContractError) {
  const SamplerDraw a = SamplerDraw::generate(1, 2, 4, 1), b = SamplerDraw::generate(1, 2, 4, 2);
  const SpikeTrain z = sample_spikes(rates_of({0.3, 0.7}), a);
  EXPECT_NO_THROW(sampler_backward(rates_of({0.3, 0.7}), a, 0.5, &z));
  EXPECT_THROW(sampler_backward(rates_of({0.3, 0.7}), b, 0.5, &z), ContractError);
}

TEST(SamplerBackward, SupportPerStep) {
  // With T = 1 the gradient is a single step's contribution: 0 or 1/alpha.
  const Index n = 2000;
  RateVector r(n, 1);
  Rng rng(5);
  for (Index i = 0; i < n; ++i) r(i, 0) = rng.uniform();
  const RateVector g = sampler_backward(r, SamplerDraw::generate(n, 1, 1, 6), 0.5);
  for (Index i = 0; i < n; ++i) EXPECT_TRUE(g(i, 0) == 0.0 || g(i, 0) == 2.0);
}

TEST(SamplerBackward, ExpectationEqualsSteps) {
  const Index draws = 100000, steps = 16;
  for (double rate : {0.25, 0.5, 0.75}) {
    const RateVector g = sampler_backward(RateVector::Constant(draws, 1, rate),
                                          SamplerDraw::generate(draws, 1, steps, 42), 0.5);
    EXPECT_NEAR(g.mean(), 16.0, 0.02 * 16.0) << "r=" << rate;
  }
}

// The tensor sampler must send exactly the surrogate of sampler_backward.
TEST(SamplerBackward, TensorOpMatchesReference) {
  Rng rng(8);
  const Index b = 3, d = 5, steps = 6;
  Tensord rates = random_tensor({b, d}, rng, 0, 1);
  const SamplerDraw draw = SamplerDraw::generate(b, d, steps, 77);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  const Tensord z = sample_spikes(rates, draw, 0.5);
  const SpikeTrain ref = sample_spikes(to_rates(rates), draw);
  EXPECT_EQ(spike_train_from(z, steps), ref);
  tape.backward(sum(z));
  const RateVector g = sampler_backward(to_rates(rates), draw, 0.5);
  for (Index i = 0; i < b * d; ++i) EXPECT_DOUBLE_EQ(rates.grad()(i), g(i / d, i % d));
}

TEST(Prior, Examples) {
  Rng rng(3);
  const Tensord noise = random_tensor({4, 6}, rng, -3, 3, false);
  const Tensord zero = prior_rates(noise, Tensord::zeros({6, 6}), Tensord::zeros({6}));
  EXPECT_TRUE((zero.values() == 0.5).all());
  const Tensord high = prior_rates(noise, Tensord::zeros({6, 6}), Tensord::full({6}, 10.0));
  EXPECT_TRUE(((high.values() - 1.0).abs() < 1e-4).all());
  EXPECT_TRUE((high.values() < 1.0).all());
  const Tensorf sat = prior_rates(Tensorf::zeros({1, 2}), Tensorf::zeros({2, 2}), Tensorf({2}, {100.f, -100.f}));
  EXPECT_GT(sat[1], 0.0f);
  EXPECT_LT(sat[0], 1.0f);
}

TEST(Prior, FiniteDifferences) {
  Rng rng(4);
  Tensord noise = random_tensor({3, 5}, rng, -2, 2);
  Tensord w = random_tensor({5, 5}, rng, -0.5, 0.5), b = random_tensor({5}, rng, -0.5, 0.5);
  const Tensord c = random_tensor({3, 5}, rng, -1, 1, false);
  const auto r = check_gradients([&] { return sum(mul(prior_rates(noise, w, b), c)); }, {noise, w, b}, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

SpikeTrain random_train(Index b, Index d, Index steps, std::uint64_t seed) {
  RateVector r(b, d);
  Rng rng(seed);
  for (Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
  return sample_spikes(r, SamplerDraw::generate(b, d, steps, seed + 1));
}

TEST(Shuffle, TimePreservesRatesAndIsSeeded) {
  const SpikeTrain z = random_train(4, 10, 16, 1);
  const SpikeTrain s = shuffle_time(z, 9);
  EXPECT_TRUE((firing_rate(s) == firing_rate(z)).all());
  EXPECT_EQ(shuffle_time(z, 9), s);
  EXPECT_FALSE(s == z);
  const SpikeTrain one = random_train(2, 5, 1, 3);
  EXPECT_EQ(shuffle_time(one, 4), one);
}

TEST(Shuffle, LengthPermutesNeuronsConsistently) {
  const SpikeTrain z = random_train(3, 12, 8, 2);
  const SpikeTrain s = shuffle_length(z, 5);
  EXPECT_EQ(shuffle_length(z, 5), s);
  // Recover the permutation from sample 0 and check it explains every sample and step.
  for (Index b = 0; b < z.batch; ++b) {
    std::vector<double> before, after;
    for (Index i = 0; i < z.neurons; ++i) {
      before.push_back(static_cast<double>(z.count(b, i)));
      after.push_back(static_cast<double>(s.count(b, i)));
    }
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    EXPECT_EQ(before, after);
  }
  for (Index j = 0; j < z.neurons; ++j) {
    Index source = -1;
    for (Index i = 0; i < z.neurons && source < 0; ++i) {
      bool same = true;
      for (Index b = 0; b < z.batch && same; ++b)
        for (Index t = 0; t < z.steps && same; ++t) same = s.at(b, j, t) == z.at(b, i, t);
      if (same) source = i;
    }
    EXPECT_GE(source, 0) << "output neuron " << j << " is not a copy of any input neuron";
  }
  const SpikeTrain single = random_train(2, 1, 8, 4);
  EXPECT_EQ(shuffle_length(single, 1), single);
}

TEST(Perturb, IdentityComplementAndRate) {
  const SpikeTrain z = random_train(10, 100, 100, 6);  // 10^5 bits
  EXPECT_EQ(perturb_spikes(z, 0.0, 1), z);
  const SpikeTrain c = perturb_spikes(z, 1.0, 1);
  for (std::size_t k = 0; k < z.bits.size(); ++k) ASSERT_EQ(c.bits[k], 1 - z.bits[k]);
  const SpikeTrain p = perturb_spikes(z, 0.1, 2);
  double flipped = 0;
  for (std::size_t k = 0; k < z.bits.size(); ++k) flipped += p.bits[k] != z.bits[k];
  const double n = static_cast<double>(z.bits.size());
  EXPECT_NEAR(flipped / n, 0.1, 3 * std::sqrt(0.1 * 0.9 / n));
  EXPECT_THROW(perturb_spikes(z, -0.1, 0), ValidationError);
  EXPECT_THROW(perturb_spikes(z, 1.1, 0), ValidationError);
}

TEST(CountLaw, Examples) {
  const CountLaw zero = count_pmf(0, 0.0, 16);
  EXPECT_EQ(zero.binomial, 1.0);
  EXPECT_EQ(zero.poisson, 1.0);
  EXPECT_NEAR(count_pmf(1, 0.5, 2).binomial, 0.5, 1e-15);
  EXPECT_THROW(count_pmf(17, 0.5, 16), ValidationError);
  EXPECT_THROW(count_pmf(-1, 0.5, 16), ValidationError);
  double total = 0;
  for (Index n = 0; n <= 16; ++n) total += count_pmf(n, 0.37, 16).binomial;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(count_pmf(3, 0.25, 16).poisson, std::pow(4.0, 3) * std::exp(-4.0) / 6.0, 1e-12);
}

TEST(CountLaw, EmpiricalHistogramMatchesBinomial) {
  const Index draws = 100000, steps = 16;
  const double rate = 0.3;
  const SpikeTrain z = sample_spikes(RateVector::Constant(draws, 1, rate), SamplerDraw::generate(draws, 1, steps, 5));
  std::vector<double> hist(steps + 1, 0.0);
  for (Index b = 0; b < draws; ++b) hist[static_cast<std::size_t>(z.count(b, 0))] += 1.0 / draws;
  double tv = 0;
  for (Index n = 0; n <= steps; ++n) tv += std::abs(hist[static_cast<std::size_t>(n)] - count_pmf(n, rate, steps).binomial);
  EXPECT_LT(0.5 * tv, 0.01);
}

TEST(Conversions, TimeMajorRoundTrip) {
  const SpikeTrain z = random_train(3, 4, 5, 8);
  const Tensorf t = to_time_major<float>(z);
  EXPECT_EQ(t.shape(), (Shape{15, 4}));
  EXPECT_EQ(spike_train_from(t, 5), z);
  EXPECT_THROW(spike_train_from(Tensorf::full({5, 4}, 0.5f), 5), ValidationError);
}

}  // namespace
}  // namespace esvae
