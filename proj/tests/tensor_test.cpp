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

#include "esvae/ops.hpp"
#include "test_support.hpp"

namespace esvae {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kFdStep = 1e-3;
constexpr double kFdTol = 1e-3;

TEST(Matmul, IdentityAndDot) {
  Tensord eye({2, 2}, {1, 0, 0, 1});
  Tensord b({2, 2}, {3, 4, 5, 6});
  const Tensord c = matmul(eye, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(c[i], b[i]);

  const Tensord d = matmul(Tensord({1, 2}, {1, 2}), Tensord({2, 1}, {3, 4}));
  EXPECT_EQ(d.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensord::zeros({2, 3}), Tensord::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsBroadcastColumnSums) {
  Rng rng(11);
  Tensord a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
  for (Index i = 0; i < 3; ++i)
    for (Index k = 0; k < 4; ++k) EXPECT_NEAR(a.grad()(i * 4 + k), b[k * 2] + b[k * 2 + 1], 1e-12);
  const auto r = check_gradients([&] { return sum(matmul(a, b)); }, {a, b}, kFdStep);
  EXPECT_LT(r.max_rel_error, kFdTol) << r.worst;
}

TEST(Conv2d, OnesCounting) {
  const Tensord y = conv2d(Tensord::full({1, 1, 3, 3}, 1.0), Tensord::full({1, 1, 3, 3}, 1.0), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y[4], 9.0);
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(y[2], 4.0);
  EXPECT_EQ(y[6], 4.0);
  EXPECT_EQ(y[8], 4.0);
  EXPECT_EQ(y[1], 6.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(3);
  const Tensord x = random_tensor({2, 1, 5, 6}, rng, -1, 1, false);
  Tensord k = Tensord::zeros({1, 1, 3, 3});
  k.values()(4) = 1.0;
  const Tensord y = conv2d(x, k, 1, 1);
  ASSERT_EQ(y.shape(), x.shape());
  EXPECT_TRUE((y.values() == x.values()).all());
}

TEST(Conv2d, NoKernelFlip) {
  // A kernel with a single 1 at the top-left tap reads the up-left neighbour.
  Tensord x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensord k = Tensord::zeros({1, 1, 3, 3});
  k.values()(0) = 1.0;
  const Tensord y = conv2d(x, k, 1, 1);
  EXPECT_EQ(y[4], 1.0);
  EXPECT_EQ(y[8], 5.0);
  EXPECT_EQ(y[0], 0.0);
}

TEST(Conv2d, StrideTwoOutputSize) {
  const Tensord y = conv2d(Tensord::zeros({1, 2, 32, 32}), Tensord::zeros({4, 2, 3, 3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 16, 16}));
  EXPECT_EQ(conv_output_size(8, 3, 2, 1), 4);
  EXPECT_EQ(conv_output_size(3, 3, 1, 0), 1);
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(conv2d(Tensord::zeros({1, 1, 2, 2}), Tensord::zeros({1, 1, 3, 3}), 1, 0), DimensionError);
  EXPECT_THROW(conv2d(Tensord::zeros({1, 1, 4, 4}), Tensord::zeros({1, 1, 3, 3}), 3, 0), ValidationError);
  EXPECT_THROW(conv2d(Tensord::zeros({1, 1, 4, 4}), Tensord::zeros({1, 1, 3, 3}), 1, 2), ValidationError);
  EXPECT_THROW(conv2d(Tensord::zeros({1, 2, 4, 4}), Tensord::zeros({1, 1, 3, 3}), 1, 1), DimensionError);
}

TEST(Conv2d, FiniteDifferences) {
  Rng rng(5);
  Tensord x = random_tensor({2, 3, 8, 8}, rng), k = random_tensor({2, 3, 3, 3}, rng);
  const Tensord w = random_tensor({2 * 2 * 8 * 8}, rng, -1, 1, false);  // covers the largest output
  for (Index stride : {1, 2}) {
    for (Index pad : {0, 1}) {
      auto f = [&] {
        const Tensord y = conv2d(x, k, stride, pad);
        // Weighted sum so every output position carries a distinct weight.
        return sum(mul(y, Tensord(y.shape(), w.values().head(y.size()))));
      };
      const auto r = check_gradients(f, {x, k}, kFdStep);
      EXPECT_LT(r.max_rel_error, kFdTol) << "stride " << stride << " pad " << pad << ": " << r.worst;
    }
  }
}

TEST(Conv2dTranspose, DeltaKernelStrideTwo) {
  Tensord y({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensord k = Tensord::zeros({1, 1, 3, 3});
  k.values()(4) = 1.0;
  const Tensord x = conv2d_transpose(y, k, 2, 1);
  ASSERT_EQ(x.shape(), (Shape{1, 1, 4, 4}));
  const double expected[16] = {1, 0, 2, 0, 0, 0, 0, 0, 3, 0, 4, 0, 0, 0, 0, 0};
  for (Index i = 0; i < 16; ++i) EXPECT_EQ(x[i], expected[i]) << i;
}

TEST(Conv2dTranspose, DoublesSpatialSize) {
  const Tensorf x = conv2d_transpose(Tensorf::zeros({2, 8, 2, 2}), Tensorf::zeros({8, 4, 3, 3}), 2, 1);
  EXPECT_EQ(x.shape(), (Shape{2, 4, 4, 4}));
}

// <conv2d(x, k), y> = <x, conv2d_transpose(y, k)> on 100 random geometries.
TEST(Conv2dTranspose, AdjointIdentityRandomShapes) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Index stride = 1 + static_cast<Index>(rng.below(2));
    const Index pad = static_cast<Index>(rng.below(2));
    const Index n = 1 + static_cast<Index>(rng.below(3));
    const Index cx = 1 + static_cast<Index>(rng.below(4)), cy = 1 + static_cast<Index>(rng.below(4));
    // Sizes for which the transpose reproduces the input size exactly.
    const Index out = 1 + static_cast<Index>(rng.below(6));
    const Index h = (out - 1) * stride - 2 * pad + 3 + (stride - 1);
    if (h < 1 || conv_output_size(h, 3, stride, pad) != out) continue;
    const Tensord x = random_tensor<double>({n, cx, h, h}, rng, -1, 1, false);
    const Tensord k = random_tensor<double>({cy, cx, 3, 3}, rng, -1, 1, false);
    const Tensord y = random_tensor<double>({n, cy, out, out}, rng, -1, 1, false);
    const Tensord cx_y = conv2d(x, k, stride, pad);
    const Tensord ct_y = conv2d_transpose(y, k, stride, pad);
    ASSERT_EQ(ct_y.shape(), x.shape());
    const double lhs = (cx_y.values().cast<double>() * y.values().cast<double>()).sum();
    const double rhs = (x.values().cast<double>() * ct_y.values().cast<double>()).sum();
    const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-3});
    EXPECT_LT(std::abs(lhs - rhs) / scale, 1e-10) << "trial " << trial;
  }
}

TEST(Conv2dTranspose, MatchesInputGradientOfConv) {
  Rng rng(9);
  Tensord x = random_tensor({2, 3, 6, 6}, rng);
  const Tensord k = random_tensor({4, 3, 3, 3}, rng, -1, 1, false);
  const Tensord y = random_tensor({2, 4, 3, 3}, rng, -1, 1, false);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(mul(conv2d(x, k, 2, 1), y)));
  }
  const Tensord t = conv2d_transpose(y, k, 2, 1);
  for (Index i = 0; i < x.size(); ++i) EXPECT_NEAR(t[i], x.grad()(i), 1e-12);
}

TEST(Conv2dTranspose, FiniteDifferences) {
  Rng rng(6);
  Tensord y = random_tensor({2, 3, 3, 3}, rng), k = random_tensor({3, 2, 3, 3}, rng);
  const Tensord w = random_tensor({2, 2, 6, 6}, rng, -1, 1, false);
  const auto r = check_gradients([&] { return sum(mul(conv2d_transpose(y, k, 2, 1), w)); }, {y, k}, kFdStep);
  EXPECT_LT(r.max_rel_error, kFdTol) << r.worst;
}

TEST(Backward, SumGivesOnes) {
  Tensord x({2, 2}, {1, 2, 3, 4}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(x));
  EXPECT_TRUE((x.grad() == 1.0).all());
}

TEST(Backward, SquareGivesTwoX) {
  Tensord x({2, 2}, {1, -2, 3, 0.5}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(mul(x, x)));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(x.grad()(i), 2.0 * x[i]);
}

TEST(Backward, RepeatedCallsAccumulateIntoLeaves) {
  Tensord x({3}, {1, 2, 3}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  const Tensord loss = sum(scale(x, 3.0));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_TRUE((x.grad() == 6.0).all());
  EXPECT_EQ(tape.size(), 2u);
  tape.reset();
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Backward, FanOutAddsGradients) {
  Tensord x({2}, {1.5, -1}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(add(x, mul(x, x))));
  EXPECT_EQ(x.grad()(0), 1.0 + 3.0);
  EXPECT_EQ(x.grad()(1), 1.0 - 2.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensord x({2}, {1, 2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, NoTapeMeansNoRecording) {
  Tensord x({2}, {1, 2}, true);
  const Tensord y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Elementwise, ForwardValues) {
  Tensord a({3}, {-1, 0, 2}), b({3}, {4, 5, 6});
  EXPECT_EQ(add(a, b)[2], 8.0);
  EXPECT_EQ(sub(a, b)[0], -5.0);
  EXPECT_EQ(mul(a, b)[2], 12.0);
  EXPECT_EQ(relu(a)[0], 0.0);
  EXPECT_EQ(sigmoid(a)[1], 0.5);
  EXPECT_EQ(clamp(a, -0.5, 1.0)[0], -0.5);
  EXPECT_EQ(clamp(a, -0.5, 1.0)[2], 1.0);
  EXPECT_EQ(mean(b).item(), 5.0);
  EXPECT_THROW(add(a, Tensord::zeros({2})), DimensionError);
}

TEST(Elementwise, FiniteDifferences) {
  Rng rng(21);
  Tensord a = random_tensor({2, 5}, rng), b = random_tensor({2, 5}, rng);
  const Tensord w = random_tensor({2, 5}, rng, -1, 1, false);
  auto f = [&] {
    Tensord y = add(mul(sigmoid(a), b), sub(scale(a, 0.5), add_scalar(b, 0.25)));
    y = add(y, clamp(b, -0.5, 0.5));
    return add(sum(mul(y, w)), mean(mul(a, a)));
  };
  const auto r = check_gradients(f, {a, b}, kFdStep);
  EXPECT_LT(r.max_rel_error, kFdTol) << r.worst;
}

TEST(Linear, BiasAndGradients) {
  Rng rng(4);
  Tensord x = random_tensor({3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  const Tensord y = linear(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{3, 4}));
  double direct = b[1];
  for (Index k = 0; k < 5; ++k) direct += x[2 * 5 + k] * w[1 * 5 + k];
  EXPECT_NEAR(y[2 * 4 + 1], direct, 1e-12);
  const Tensord c = random_tensor({3, 4}, rng, -1, 1, false);
  const auto r = check_gradients([&] { return sum(mul(relu(linear(x, w, b)), c)); }, {x, w, b}, kFdStep);
  EXPECT_LT(r.max_rel_error, kFdTol) << r.worst;
}

TEST(TimeAxis, RepeatAndMean) {
  Tensord x({2, 2}, {1, 2, 3, 4});
  const Tensord r = time_repeat(x, 3);
  ASSERT_EQ(r.shape(), (Shape{6, 2}));
  for (Index t = 0; t < 3; ++t)
    for (Index i = 0; i < 4; ++i) EXPECT_EQ(r[t * 4 + i], x[i]);
  const Tensord m = time_mean(r, 3);
  EXPECT_TRUE((m.values() == x.values()).all());
  EXPECT_THROW(time_mean(Tensord::zeros({5, 2}), 3), DimensionError);

  Rng rng(8);
  Tensord a = random_tensor({2, 3}, rng);
  const Tensord w = random_tensor({2, 3}, rng, -1, 1, false);
  auto f = [&] {
    const Tensord s = time_repeat(a, 4);
    return sum(mul(time_mean(mul(s, s), 4), w));
  };
  const auto res = check_gradients(f, {a}, kFdStep);
  EXPECT_LT(res.max_rel_error, kFdTol) << res.worst;
}

TEST(Reshape, KeepsValuesAndGradients) {
  Tensord x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const Tensord y = reshape(x, {3, 2});
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  EXPECT_THROW(reshape(x, {4, 2}), DimensionError);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(mul(reshape(x, {6}), reshape(x, {6}))));
  EXPECT_EQ(x.grad()(5), 12.0);
}

TEST(Determinism, IdenticalInputsGiveIdenticalBits) {
  auto run = [] {
    Rng rng(77);
    const Tensorf x = random_tensor<float>({3, 4, 8, 8}, rng, 0, 1, false);
    const Tensorf k = random_tensor<float>({6, 4, 3, 3}, rng, -1, 1, false);
    return conv2d(x, k, 2, 1).values();
  };
  EXPECT_TRUE((run() == run()).all());
}

}  // namespace
}  // namespace esvae
