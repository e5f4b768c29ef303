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

#include <cmath>
#include <filesystem>

#include "esvae/checkpoint.hpp"
#include "esvae/model.hpp"
#include "esvae/optim.hpp"
#include "esvae/trainer.hpp"
#include "test_support.hpp"

namespace esvae {
namespace {

using testing::random_tensor;

ModelConfig tiny_config(std::uint64_t seed = 3) {
  ModelConfig cfg = ModelConfig::desk(4);
  cfg.image_size = 16;
  cfg.latent_dim = 16;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

Dataset synthetic_digits(Index n, Index size, std::uint64_t seed) {
  Dataset ds;
  ds.name = "synthetic";
  ds.count = n;
  ds.height = ds.width = size;
  Rng rng(seed);
  for (Index k = 0; k < n; ++k) {
    const int label = static_cast<int>(k % 4);
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) {
        const bool on = label == 0 ? (x > size / 4 && x < 3 * size / 4 && y > size / 4 && y < 3 * size / 4)
                        : label == 1 ? (std::abs(x - y) < 2)
                        : label == 2 ? (y > size / 2)
                                     : (x < size / 3);
        ds.pixels.push_back(std::clamp(static_cast<float>((on ? 0.9 : 0.05) + 0.05 * rng.normal()), 0.0f, 1.0f));
      }
    ds.labels.push_back(label);
  }
  return ds;
}

TEST(Model, FullScaleShapesAndParameterCount) {
  ModelConfig cfg;
  cfg.steps = 2;
  EsvaeModel a(cfg), b(cfg);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  // Hand count: convs and FCs without bias, tdBN gamma/beta, readout with bias, prior with bias.
  const Index enc = 32 * 1 * 9 + 64 * 32 * 9 + 128 * 64 * 9 + 256 * 128 * 9 + 128 * 1024;
  const Index enc_bn = 2 * (32 + 64 + 128 + 256 + 128);
  const Index dec = 1024 * 128 + 256 * 128 * 9 + 128 * 64 * 9 + 64 * 32 * 9 + 32 * 32 * 9;
  const Index dec_bn = 2 * (1024 + 128 + 64 + 32 + 32);
  const Index head = 32 * 9 + 1 + 128 * 128 + 128;
  EXPECT_EQ(a.parameter_count(), enc + enc_bn + dec + dec_bn + head);

  Rng rng(1);
  const Tensorf x = random_tensor<float>({2, 1, 32, 32}, rng, 0, 1, false);
  const Tensorf z = a.encode(x, true);
  EXPECT_EQ(z.shape(), (Shape{2 * 2, 128}));
  EXPECT_EQ(a.decode(z, true).shape(), x.shape());
}

TEST(Model, DeskEncoderIsBinaryWithLatentPerStep) {
  ModelConfig cfg = ModelConfig::desk(8);
  EsvaeModel m(cfg);
  Rng rng(2);
  const Tensorf z = m.encode(random_tensor<float>({3, 1, 32, 32}, rng, 0, 1, false), true);
  EXPECT_EQ(z.shape(), (Shape{8 * 3, 128}));
  EXPECT_TRUE(((z.values() == 0.0f) || (z.values() == 1.0f)).all());
  const SpikeTrain train = spike_train_from(z, 8);
  EXPECT_EQ(train.batch, 3);
  EXPECT_EQ(train.neurons, 128);
}

TEST(Model, RejectsWrongImageSizeAndBadConfig) {
  EsvaeModel m(tiny_config());
  EXPECT_THROW(m.encode(Tensorf::zeros({1, 1, 32, 32}), false), ConfigError);
  ModelConfig bad = tiny_config();
  bad.image_size = 20;  // not divisible by 2^4
  EXPECT_THROW(EsvaeModel{bad}, ConfigError);
}

TEST(Model, LayerAuditMatchesConstruction) {
  EsvaeModel m(ModelConfig::desk(8));
  const auto& layers = m.layers();
  ASSERT_EQ(layers.size(), 5u + 5u + 2u);
  EXPECT_EQ(layers.front().name, "encoder.conv0");
  EXPECT_FALSE(layers.front().spiking_input);
  EXPECT_EQ(layers.front().macs(), 8.0 * 16 * 16 * 1 * 9);
  const auto& prior = layers.back();
  EXPECT_EQ(prior.part, "prior");
  EXPECT_FALSE(prior.spiking_output);
  Index bottleneck = 0;
  for (const auto& p : m.parameters()) bottleneck += p.group == ParamGroup::bottleneck;
  EXPECT_EQ(bottleneck, 2);
}

TEST(Model, ConstructionIsSeeded) {
  EsvaeModel a(tiny_config(5)), b(tiny_config(5)), c(tiny_config(6));
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_TRUE((a.parameters()[i].tensor.values() == b.parameters()[i].tensor.values()).all());
  EXPECT_FALSE((a.parameters()[0].tensor.values() == c.parameters()[0].tensor.values()).all());
}

TEST(Model, UntrainedEvalLeavesStatisticsAlone) {
  EsvaeModel m(tiny_config());
  Rng rng(3);
  const Tensorf x = random_tensor<float>({2, 1, 16, 16}, rng, 0, 1, false);
  m.encode(x, false);
  for (const auto& s : m.norm_stats()) EXPECT_FALSE(s.stats->initialized) << s.name;
  const Tensorf img = generate_images(m, 3, 9);
  EXPECT_EQ(img.shape(), (Shape{3, 1, 16, 16}));
  EXPECT_TRUE(((img.values() >= 0.0f) && (img.values() <= 1.0f)).all());
  EXPECT_EQ(generate_images(m, 0, 9).dim(0), 0);
}

TEST(Adamw, ZeroGradientZeroDecayIsNoop) {
  Buffer<float> p(3);
  p << 1.f, -2.f, 0.5f;
  const Buffer<float> before = p;
  AdamMoments<float> mom;
  adamw_step<float>(p, Buffer<float>::Zero(3), mom, 1, AdamWConfig{0.01, 0.0});
  EXPECT_TRUE((p == before).all());
}

TEST(Adamw, FirstStepWithUnitGradient) {
  Buffer<double> p = Buffer<double>::Constant(1, 0.7);
  AdamMoments<double> mom;
  const AdamWConfig cfg{0.001, 0.0};
  adamw_step<double>(p, Buffer<double>::Ones(1), mom, 1, cfg);
  // m_hat = 1, v_hat = 1 -> step lr / (1 + eps).
  EXPECT_NEAR(p(0), 0.7 - 0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adamw, ZeroGradientDecayShrinks) {
  Buffer<double> p(2);
  p << 2.0, -4.0;
  AdamMoments<double> mom;
  adamw_step<double>(p, Buffer<double>::Zero(2), mom, 1, AdamWConfig{0.01, 0.1});
  EXPECT_DOUBLE_EQ(p(0), 2.0 * (1 - 0.001));
  EXPECT_DOUBLE_EQ(p(1), -4.0 * (1 - 0.001));
  EXPECT_THROW(adamw_step<double>(p, Buffer<double>::Zero(3), mom, 2, AdamWConfig{}), DimensionError);
}

TEST(Adamw, TrainerGroupsUseDistinctRates) {
  EsvaeModel m(tiny_config());
  Trainer trainer(m);
  auto& groups = trainer.optimizer().groups();
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_DOUBLE_EQ(groups[0].config.lr, 0.0006);
  EXPECT_DOUBLE_EQ(groups[1].config.lr, 0.006);
  // Identical unit gradients everywhere: the first step moves each parameter by about its group lr.
  std::vector<Buffer<float>> before;
  for (auto& g : groups)
    for (auto& p : g.params) {
      before.push_back(p.values());
      p.grad().setOnes();
    }
  trainer.optimizer().step();
  std::size_t k = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (auto& p : groups[gi].params) {
      const Buffer<float> decayed = before[k++] * static_cast<float>(1.0 - groups[gi].config.lr * 0.001);
      const double moved = (decayed - p.values()).abs().maxCoeff();
      EXPECT_NEAR(moved, groups[gi].config.lr, groups[gi].config.lr * 1e-3);
    }
}

TEST(Optim, ClipGradNorm) {
  std::vector<Tensord> ps{Tensord({2}, {0, 0}, true), Tensord({1}, {0}, true)};
  ps[0].grad() << 3.0, 0.0;
  ps[1].grad() << 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(ps[0].grad()(0), 0.6, 1e-12);
  EXPECT_NEAR(ps[1].grad()(0), 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(ps[1].grad()(0), 0.8, 1e-12);
}

TEST(Trainer, StepFollowsAlgorithmOrder) {
  EsvaeModel m(tiny_config());
  Trainer trainer(m);
  const Dataset ds = synthetic_digits(8, 16, 1);
  std::vector<std::string> trace;
  const std::vector<Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
  trainer.train_step(ds.gather(idx), &trace);
  const std::vector<std::string> expected{"encoder", "rate", "prior", "sample", "decoder", "loss", "update"};
  EXPECT_EQ(trace, expected);
  EXPECT_EQ(trainer.step_count(), 1);
}

TEST(Trainer, GradientsReachEncoderAndBottleneck) {
  EsvaeModel m(tiny_config());
  const Dataset ds = synthetic_digits(8, 16, 2);
  const std::vector<Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const ModelConfig& cfg = m.config();
  Tape<float> tape;
  TapeScope<float> scope(tape);
  const Tensorf x = ds.gather(idx);
  const Tensorf rates = time_mean(m.encode(x, true), cfg.steps);
  Rng rng(4);
  const Tensorf prior = m.prior(random_tensor<float>({8, cfg.latent_dim}, rng, -1, 1, false));
  const Tensorf z = sample_spikes(rates, SamplerDraw::generate(8, cfg.latent_dim, cfg.steps, 5), 0.5f);
  const auto terms = total_loss(x, m.decode(z, true), rates, prior, 1.0);
  tape.backward(terms.total);
  for (const auto& p : m.parameters()) {
    if (p.name == "encoder.conv0.weight" || p.name == "encoder.fc.weight" || p.name == "prior.fc.weight") {
      ASSERT_TRUE(p.tensor.has_grad()) << p.name;
      EXPECT_GT(p.tensor.grad().abs().maxCoeff(), 0.0f) << p.name;
    }
  }
}

TEST(Trainer, OneEpochReducesLossOnFixedImages) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig cfg = tiny_config(seed);
    cfg.lr = 0.005;
    EsvaeModel m(cfg);
    Trainer trainer(m);
    const Dataset ds = synthetic_digits(64, 16, seed);
    const double before = dataset_mse(m, ds, 32, 11);
    EpochMetrics last;
    for (int e = 0; e < 5; ++e) last = trainer.train_epoch(ds, e);
    EXPECT_LT(dataset_mse(m, ds, 32, 11), before) << "seed " << seed;
    EXPECT_EQ(last.batches, 8);
  }
}

TEST(Trainer, ZeroLambdaStillReportsMmd) {
  ModelConfig cfg = tiny_config();
  cfg.lambda_mmd = 0.0;
  EsvaeModel m(cfg);
  Trainer trainer(m);
  const Dataset ds = synthetic_digits(8, 16, 3);
  const std::vector<Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const StepMetrics s = trainer.train_step(ds.gather(idx));
  EXPECT_EQ(s.loss.total, s.loss.mse);
  EXPECT_GT(s.loss.mmd2, 0.0);
  // The bottleneck receives no gradient, so only weight decay moves it.
  for (const auto& p : m.parameters())
    if (p.group == ParamGroup::bottleneck && p.tensor.has_grad()) {
      EXPECT_EQ(p.tensor.grad().abs().maxCoeff(), 0.0f);
    }
}

TEST(Trainer, NonFiniteLossNamesBatchAndTerm) {
  EsvaeModel m(tiny_config());
  Trainer trainer(m);
  const Dataset ds = synthetic_digits(8, 16, 4);
  const std::vector<Index> idx{0, 1, 2, 3, 4, 5, 6, 7};
  trainer.train_step(ds.gather(idx));
  for (auto& p : m.parameters())
    if (p.name == "decoder.readout.bias") p.tensor.values().setConstant(std::nanf(""));
  try {
    trainer.train_step(ds.gather(idx));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("mse"), std::string::npos) << msg;
  }
}

TEST(Trainer, SameSeedSameMetricsAndImages) {
  auto run = [] {
    EsvaeModel m(tiny_config(8));
    Trainer trainer(m);
    const Dataset ds = synthetic_digits(16, 16, 5);
    std::vector<EpochMetrics> metrics;
    for (int e = 0; e < 2; ++e) metrics.push_back(trainer.train_epoch(ds, e));
    return std::make_pair(metrics, generate_images(m, 4, 21).values());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_TRUE((a.second == b.second).all());
}

TEST(Reconstruct, ShapesAndQuantizedRates) {
  EsvaeModel m(tiny_config());
  const Dataset ds = synthetic_digits(5, 16, 6);
  const std::vector<Index> idx{0, 1, 2, 3, 4};
  const Reconstruction r = reconstruct(m, ds.gather(idx), 3);
  EXPECT_EQ(r.images.shape(), (Shape{5, 1, 16, 16}));
  for (Index i = 0; i < r.rates.size(); ++i) {
    const double scaled = r.rates.data()[i] * 4;
    EXPECT_EQ(scaled, std::round(scaled));
  }
  EXPECT_EQ(r.latent.steps, 4);
}

TEST(Probe, RandomLabelsAreNearChance) {
  Rng rng(10);
  const Index n = 600, test = 2000;
  RateVector xr(n, 16), xt(test, 16);
  for (Index i = 0; i < xr.size(); ++i) xr.data()[i] = rng.uniform();
  for (Index i = 0; i < xt.size(); ++i) xt.data()[i] = rng.uniform();
  std::vector<int> yr(n), yt(test);
  for (auto& y : yr) y = static_cast<int>(rng.below(10));
  for (auto& y : yt) y = static_cast<int>(rng.below(10));
  ProbeConfig pc;
  pc.epochs = 5;
  const double acc = probe_train_eval(xr, yr, xt, yt, pc);
  EXPECT_NEAR(acc, 0.1, 0.03);
  EXPECT_THROW(probe_train_eval(xr, std::vector<int>(3, 0), xt, yt, pc), ValidationError);
}

TEST(Probe, SeparableRatesAreLearned) {
  Rng rng(11);
  const Index n = 400;
  RateVector x(n, 8);
  std::vector<int> y(n);
  for (Index i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 4);
    for (Index k = 0; k < 8; ++k) x(i, k) = (k / 2 == y[i] ? 0.8 : 0.1) + 0.05 * rng.uniform();
  }
  ProbeConfig pc;
  pc.epochs = 20;
  EXPECT_GT(probe_train_eval(x, y, x, y, pc), 0.95);
}

class CheckpointTest : public ::testing::Test {
 protected:
  testing::TempDir dir_{"ckpt"};
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  EsvaeModel m(tiny_config());
  Trainer trainer(m);
  const Dataset ds = synthetic_digits(16, 16, 7);
  trainer.train_epoch(ds, 0);
  const std::string path = dir_.file("model.ckpt");
  save_checkpoint(path, m, &trainer, 1);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));

  const Checkpoint ckpt = read_checkpoint(path);
  EXPECT_EQ(ckpt.epoch, 1);
  EXPECT_EQ(ckpt.optimizer_step, trainer.step_count());
  EXPECT_EQ(to_text(ckpt.config), to_text(m.config()));
  EsvaeModel restored = restore_model(ckpt);

  const std::vector<Index> idx{0, 1, 2, 3};
  const Tensorf x = ds.gather(idx);
  const Reconstruction a = reconstruct(m, x, 5), b = reconstruct(restored, x, 5);
  EXPECT_TRUE((a.images.values() == b.images.values()).all());
  EXPECT_TRUE((a.rates == b.rates).all());
  EXPECT_TRUE((generate_images(m, 3, 4).values() == generate_images(restored, 3, 4).values()).all());
}

TEST_F(CheckpointTest, ResumedTrainingMatchesUninterrupted) {
  const Dataset ds = synthetic_digits(16, 16, 8);
  EsvaeModel a(tiny_config());
  Trainer ta(a);
  ta.train_epoch(ds, 0);
  const std::string path = dir_.file("resume.ckpt");
  save_checkpoint(path, a, &ta, 1);
  const EpochMetrics straight = ta.train_epoch(ds, 1);

  const Checkpoint ckpt = read_checkpoint(path);
  EsvaeModel b = restore_model(ckpt);
  Trainer tb(b);
  restore_trainer(ckpt, b, tb);
  EXPECT_EQ(tb.train_epoch(ds, 1), straight);
}

TEST_F(CheckpointTest, CorruptionIsLoadError) {
  EsvaeModel m(tiny_config());
  const std::string bytes = encode_checkpoint(m, nullptr, 0);
  EXPECT_EQ(bytes.substr(0, 9), "ESVAECKPT");
  EXPECT_NO_THROW(decode_checkpoint(bytes));

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, cut)), LoadError) << "cut at " << cut;

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), LoadError);

  std::string bumped = bytes;
  bumped[9] = static_cast<char>(kCheckpointVersion + 1);
  try {
    decode_checkpoint(bumped);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  EXPECT_THROW(decode_checkpoint(bytes + "x"), LoadError);
  EXPECT_THROW(read_checkpoint(dir_.file("missing.ckpt")), LoadError);

  // A structurally valid file with a missing tensor fails before any model is returned.
  Checkpoint partial = decode_checkpoint(bytes);
  partial.tensors.erase("decoder.readout.bias");
  EXPECT_THROW(restore_model(partial), LoadError);
}

TEST_F(CheckpointTest, LittleEndianPayload) {
  EsvaeModel m(tiny_config());
  const std::string bytes = encode_checkpoint(m, nullptr, 0);
  // Locate the first tensor name and decode its first float by hand.
  const std::string name = m.parameters().front().name;
  const std::size_t at = bytes.find(name);
  ASSERT_NE(at, std::string::npos);
  std::size_t pos = at + name.size();
  auto u32 = [&](std::size_t o) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[o])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[o + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[o + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[o + 3])) << 24;
  };
  EXPECT_EQ(u32(at - 4), name.size());
  const std::uint32_t rank = u32(pos);
  EXPECT_EQ(rank, m.parameters().front().tensor.rank());
  pos += 4 + 8 * rank;
  const std::uint32_t bits = u32(pos);
  float first;
  std::memcpy(&first, &bits, 4);
  EXPECT_EQ(first, m.parameters().front().tensor[0]);
}

}  // namespace
}  // namespace esvae
