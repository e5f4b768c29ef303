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


// esvae: train, sample and probe spiking VAEs from the command line.
//
// Exit codes: 0 success, 2 bad configuration or checkpoint, 3 data error,
// 4 numeric failure. Every command writes <out>/config-resolved.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "esvae/checkpoint.hpp"
#include "esvae/config.hpp"
#include "esvae/data.hpp"
#include "esvae/experiments.hpp"
#include "esvae/metrics.hpp"
#include "esvae/random.hpp"
#include "esvae/trainer.hpp"

namespace fs = std::filesystem;
using namespace esvae;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Common {
  std::string out = "out";
  std::string data = "data/mnist5k";
  std::string checkpoint;
  std::uint64_t seed = 0;
  Index images = 0;
  Index batch = 100;
};

void add_out(CLI::App* cmd, Common& c) { cmd->add_option("--out", c.out, "Output directory")->capture_default_str(); }
void add_data(CLI::App* cmd, Common& c) {
  cmd->add_option("--data", c.data, "Directory with IDX files")->capture_default_str();
  cmd->add_option("--images", c.images, "Use at most this many images (0 = all)")->capture_default_str();
}
void add_checkpoint(CLI::App* cmd, Common& c) {
  cmd->add_option("--checkpoint", c.checkpoint, "Model checkpoint")->required();
}
void add_seed(CLI::App* cmd, Common& c) { cmd->add_option("--seed", c.seed, "Root seed")->capture_default_str(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text_csv(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + row[i];
    text += '\n';
  }
  write_file_atomic(path, text);
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

// The resolved model config followed by the command's own settings as comments,
// so the file still parses as a config.
void write_resolved(const fs::path& out, const ModelConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& settings) {
  std::string text = "# command = " + command + "\n";
  for (const auto& [k, v] : settings) text += "# " + k + " = " + v + "\n";
  text += to_text(cfg);
  write_file_atomic((out / "config-resolved").string(), text);
}

Dataset load_split(const Common& c, const std::string& split, const ModelConfig& cfg) {
  return load_mnist_split(c.data, split, c.images, cfg.image_size);
}

Tensorf stack_rows(const std::vector<Tensorf>& parts) {
  Index n = 0, total = 0;
  for (const auto& p : parts) {
    n += p.dim(0);
    total += p.size();
  }
  Buffer<float> v(total);
  Index at = 0;
  for (const auto& p : parts) {
    v.segment(at, p.size()) = p.values();
    at += p.size();
  }
  const Tensorf& f = parts.front();
  return Tensorf({n, f.dim(1), f.dim(2), f.dim(3)}, std::move(v));
}

// ---- train

struct TrainFlags {
  std::string config;
  bool desk = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size, steps;
  std::optional<double> lambda, lr;
  int montage_every = 1;
  Index eval_images = 256;
};

int cmd_train(const Common& c, const TrainFlags& f) {
  ModelConfig cfg = f.desk ? ModelConfig::desk() : ModelConfig{};
  if (!f.config.empty()) cfg = load_config(f.config, cfg);
  if (f.desk) cfg.arch_scale = ArchScale::desk;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.steps) cfg.steps = *f.steps;
  if (f.lambda) cfg.lambda_mmd = *f.lambda;
  if (f.lr) cfg.lr = *f.lr;
  cfg.validate();
  if (f.montage_every < 1) throw ConfigError("--montage-every must be at least 1");

  const fs::path out = prepare_out(c.out);
  write_resolved(out, cfg, "train",
                 {{"data", c.data}, {"images", std::to_string(c.images)}, {"montage_every", std::to_string(f.montage_every)}});
  const Dataset train = load_split(c, "train", cfg);
  Dataset eval;
  try {
    eval = load_mnist_split(c.data, "t10k", f.eval_images, cfg.image_size);
  } catch (const DataError&) {
    eval = train.head(f.eval_images);  // no held-out split next to the training data
  }
  std::cerr << "train: " << train.count << " images, " << to_string(cfg.arch_scale) << " scale, T=" << cfg.steps
            << ", " << cfg.epochs << " epochs\n";

  EsvaeModel model(cfg);
  Trainer trainer(model);
  fs::create_directories(out / "checkpoints");
  std::vector<std::vector<double>> rows;
  const double init_mse = dataset_mse(model, eval, cfg.batch_size, derive_seed(cfg.seed, "eval"));
  std::cerr << "  init eval_mse " << fmt(init_mse) << "\n";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochMetrics m = trainer.train_epoch(train, epoch);
    const double eval_mse = dataset_mse(model, eval, cfg.batch_size, derive_seed(cfg.seed, "eval"));
    rows.push_back({static_cast<double>(epoch + 1), m.mse, m.mmd2, m.total, m.encoder_rate, eval_mse});
    write_csv((out / "metrics.csv").string(), {"epoch", "train_mse", "train_mmd2", "train_loss", "encoder_rate", "eval_mse"},
              rows);

    char name[64];
    std::snprintf(name, sizeof(name), "epoch-%03d.ckpt", epoch + 1);
    save_checkpoint((out / "checkpoints" / name).string(), model, &trainer, epoch + 1);
    save_checkpoint((out / "model.ckpt").string(), model, &trainer, epoch + 1);
    if ((epoch + 1) % f.montage_every == 0 || epoch + 1 == cfg.epochs) {
      const Index k = std::min<Index>(8, eval.count);
      std::vector<Index> idx(static_cast<std::size_t>(k));
      for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
      const Tensorf x = eval.gather(idx);
      const Reconstruction r = reconstruct(model, x, derive_seed(cfg.seed, "montage"));
      const Tensorf samples = generate_images(model, k, derive_seed(cfg.seed, "montage-samples"));
      std::snprintf(name, sizeof(name), "montage-epoch-%03d.pgm", epoch + 1);
      write_montage(stack_rows({x, r.images, samples}), k, (out / name).string());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  epoch " << epoch + 1 << " train_mse " << fmt(m.mse) << " mmd2 " << fmt(m.mmd2) << " eval_mse "
              << fmt(eval_mse) << " rate " << fmt(m.encoder_rate) << " (" << fmt(secs) << " s)\n";
  }
  return 0;
}

// ---- generate

int cmd_generate(const Common& c, Index num, Index cols) {
  if (num < 1) throw ValidationError("--num must be at least 1");
  if (cols < 1) throw ValidationError("--cols must be at least 1");
  EsvaeModel model = load_model(c.checkpoint);
  const fs::path out = prepare_out(c.out);
  write_resolved(out, model.config(), "generate",
                 {{"checkpoint", c.checkpoint}, {"num", std::to_string(num)}, {"seed", std::to_string(c.seed)}});
  const RateVector rates = sample_prior_rates(model, num, c.seed);
  const Tensorf images = generate_images(model, num, c.seed);
  write_montage(images, cols, (out / "generated.pgm").string());
  std::vector<std::string> header{"image", "mean_rate"};
  for (Index k = 0; k < rates.cols(); ++k) header.push_back("r" + std::to_string(k));
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < rates.rows(); ++i) {
    std::vector<double> row{static_cast<double>(i), rates.row(i).mean()};
    for (Index k = 0; k < rates.cols(); ++k) row.push_back(rates(i, k));
    rows.push_back(std::move(row));
  }
  write_csv((out / "rates.csv").string(), header, rows);
  std::cout << "wrote " << num << " images to " << (out / "generated.pgm").string() << "\n";
  return 0;
}

// ---- shuffle-test

int cmd_shuffle(const Common& c, const std::string& dim_name, const std::string& split) {
  const ShuffleDim dim = parse_shuffle_dim(dim_name);
  EsvaeModel model = load_model(c.checkpoint);
  const fs::path out = prepare_out(c.out);
  write_resolved(out, model.config(), "shuffle-test",
                 {{"checkpoint", c.checkpoint}, {"data", c.data}, {"split", split}, {"dim", dim_name},
                  {"images", std::to_string(c.images)}, {"seed", std::to_string(c.seed)}});
  const Dataset data = load_split(c, split, model.config());
  const ShuffleResult r = shuffle_test(model, data, dim, c.seed, c.batch);
  write_csv((out / ("shuffle-" + dim_name + ".csv")).string(),
            {"vanilla_vs_original", "shuffled_vs_original", "shuffled_vs_vanilla"},
            {{r.vanilla_vs_original, r.shuffled_vs_original, r.shuffled_vs_vanilla}});
  write_montage(stack_rows({r.original, r.vanilla, r.shuffled}), r.original.dim(0),
                (out / ("shuffle-" + dim_name + ".pgm")).string());
  std::cout << dim_name << "-shuffled: " << fmt(r.shuffled_vs_original) << " vs original, "
            << fmt(r.shuffled_vs_vanilla) << " vs vanilla (vanilla vs original " << fmt(r.vanilla_vs_original)
            << ")\n";
  return 0;
}

// ---- noise-test

std::vector<double> parse_probs(const std::string& text) {
  std::vector<double> probs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      probs.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--probs: not a number: '" + item + "'");
    }
  }
  if (probs.empty()) throw ValidationError("--probs: empty probability list");
  return probs;
}

int cmd_noise(const Common& c, const std::string& probs_text, const std::string& split) {
  const std::vector<double> probs = parse_probs(probs_text);
  EsvaeModel model = load_model(c.checkpoint);
  const fs::path out = prepare_out(c.out);
  write_resolved(out, model.config(), "noise-test",
                 {{"checkpoint", c.checkpoint}, {"data", c.data}, {"split", split}, {"probs", probs_text},
                  {"images", std::to_string(c.images)}, {"seed", std::to_string(c.seed)}});
  const Dataset data = load_split(c, split, model.config());
  const auto curve = noise_test(model, data, probs, c.seed, c.batch);
  std::vector<std::vector<double>> rows;
  for (const auto& p : curve) {
    rows.push_back({p.flip_probability, p.vs_original, p.vs_vanilla});
    std::cout << "a=" << fmt(p.flip_probability) << " vs_original " << fmt(p.vs_original) << " vs_vanilla "
              << fmt(p.vs_vanilla) << "\n";
  }
  write_csv((out / "noise.csv").string(), {"flip_probability", "vs_original", "vs_vanilla"}, rows);
  return 0;
}

// ---- energy

int cmd_energy(const Common& c, const std::string& arch, std::optional<double> rate, std::optional<int> steps_flag) {
  if (c.checkpoint.empty() == arch.empty()) throw ConfigError("energy: give exactly one of --checkpoint or --arch");
  std::optional<EsvaeModel> model;
  ModelConfig cfg;
  if (!c.checkpoint.empty()) {
    model.emplace(load_model(c.checkpoint));
    cfg = model->config();
  } else if (arch == "full") {
    cfg = ModelConfig{};
  } else if (arch == "desk") {
    cfg = ModelConfig::desk();
  } else {
    throw ConfigError("--arch must be 'full' or 'desk', got '" + arch + "'");
  }
  if (steps_flag) cfg.steps = *steps_flag;
  cfg.validate();
  const fs::path out = prepare_out(c.out);
  write_resolved(out, cfg, "energy",
                 {{"checkpoint", c.checkpoint}, {"arch", arch}, {"rate", rate ? fmt(*rate) : "measured"}});

  double avg_rate = 0.0;
  if (rate) {
    avg_rate = *rate;
  } else if (model) {
    const Dataset data = load_split(c, "t10k", cfg);
    avg_rate = dataset_rates(*model, data, c.batch).mean();
  } else {
    throw ConfigError("energy: --rate is required with --arch");
  }
  const auto flops = layer_flops(model ? model->layers() : EsvaeModel(cfg).layers());
  std::vector<std::vector<std::string>> rows;
  for (const auto& f : flops)
    rows.push_back({f.name, f.part, f.spiking_input ? "1" : "0", fmt(f.add), fmt(f.mul)});
  write_text_csv((out / "layer-flops.csv").string(), {"layer", "part", "spiking_input", "flops_add", "flops_mul"},
                 rows);
  const EnergyReport snn = model_energy(flops, avg_rate, cfg.steps, true);
  const EnergyReport ann = model_energy(flops, avg_rate, cfg.steps, false);
  std::vector<std::vector<std::string>> report;
  for (const auto& [name, r] : {std::pair{"spiking", snn}, std::pair{"non_spiking", ann}})
    report.push_back({name, fmt(r.flops_add), fmt(r.flops_mul), fmt(r.avg_rate), std::to_string(r.steps), fmt(r.sops),
                      fmt(r.energy_joules)});
  write_text_csv((out / "energy.csv").string(),
                 {"mode", "flops_add", "flops_mul", "avg_rate", "steps", "sops", "energy_joules"}, report);
  std::cout << "FLOPs " << fmt(snn.flops_add) << " + " << fmt(snn.flops_mul) << ", rate " << fmt(avg_rate) << ", T "
            << cfg.steps << " -> " << fmt(snn.energy_joules) << " J\n";
  return 0;
}

// ---- probe

int cmd_probe(const Common& c, const ProbeConfig& pc, Index test_images) {
  EsvaeModel model = load_model(c.checkpoint);
  const fs::path out = prepare_out(c.out);
  write_resolved(out, model.config(), "probe",
                 {{"checkpoint", c.checkpoint}, {"data", c.data}, {"epochs", std::to_string(pc.epochs)},
                  {"lr", fmt(pc.lr)}, {"batch_size", std::to_string(pc.batch_size)}, {"seed", std::to_string(pc.seed)},
                  {"images", std::to_string(c.images)}, {"test_images", std::to_string(test_images)}});
  const Dataset train = load_split(c, "train", model.config());
  const Dataset test = load_mnist_split(c.data, "t10k", test_images, model.config().image_size);
  if (!train.has_labels() || !test.has_labels()) throw DataError("probe needs label files in " + c.data);
  const RateVector xr = dataset_rates(model, train, c.batch), xt = dataset_rates(model, test, c.batch);
  const double acc = probe_train_eval(xr, train.labels, xt, test.labels, pc);
  write_csv((out / "probe.csv").string(), {"epochs", "train_images", "test_images", "accuracy"},
            {{static_cast<double>(pc.epochs), static_cast<double>(train.count), static_cast<double>(test.count), acc}});
  std::cout << "probe accuracy " << fmt(acc) << "\n";
  return 0;
}

// ---- rate-hist

int cmd_rate_hist(const Common& c, int bins, const std::string& split) {
  if (bins < 2) throw ValidationError("--bins must be at least 2");
  EsvaeModel model = load_model(c.checkpoint);
  const fs::path out = prepare_out(c.out);
  write_resolved(out, model.config(), "rate-hist",
                 {{"checkpoint", c.checkpoint}, {"data", c.data}, {"split", split}, {"bins", std::to_string(bins)},
                  {"images", std::to_string(c.images)}, {"seed", std::to_string(c.seed)}});
  const Dataset data = load_split(c, split, model.config());
  const Histogram hp = rate_histogram(dataset_rates(model, data, c.batch), bins);
  const Histogram hq = rate_histogram(sample_prior_rates(model, data.count, c.seed), bins);
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < bins; ++k) {
    const auto i = static_cast<std::size_t>(k);
    rows.push_back({hp.edges[i], hp.edges[i + 1], hp.frequency[i], hq.frequency[i]});
  }
  write_csv((out / "rate-hist.csv").string(), {"bin_lo", "bin_hi", "posterior", "prior"}, rows);
  std::cout << "wrote " << bins << "-bin histograms over " << data.count << " images\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking VAE with firing-rate latents"};
  app.require_subcommand(1);
  Common c;
  TrainFlags tf;

  auto* train = app.add_subcommand("train", "Train a model");
  add_out(train, c);
  add_data(train, c);
  train->add_option("--config", tf.config, "key = value config file");
  train->add_flag("--desk-scale", tf.desk, "Quarter-width channels, T=8");
  train->add_option("--seed", tf.seed, "Root seed (overrides the config)");
  train->add_option("--epochs", tf.epochs);
  train->add_option("--batch-size", tf.batch_size);
  train->add_option("--steps", tf.steps, "Time window T");
  train->add_option("--lambda", tf.lambda, "MMD weight");
  train->add_option("--lr", tf.lr, "Body learning rate");
  train->add_option("--montage-every", tf.montage_every, "Epochs between montages")->capture_default_str();
  train->add_option("--eval-images", tf.eval_images, "Held-out images for eval_mse")->capture_default_str();

  Index num = 64, cols = 8;
  auto* gen = app.add_subcommand("generate", "Sample images from the prior");
  add_out(gen, c);
  add_checkpoint(gen, c);
  add_seed(gen, c);
  gen->add_option("--num", num, "Number of images")->capture_default_str();
  gen->add_option("--cols", cols, "Montage columns")->capture_default_str();

  std::string dim = "time", split = "t10k";
  auto* shuffle = app.add_subcommand("shuffle-test", "Decode latents with shuffled spikes");
  add_out(shuffle, c);
  add_checkpoint(shuffle, c);
  add_data(shuffle, c);
  add_seed(shuffle, c);
  shuffle->add_option("--dim", dim, "time or length")->capture_default_str();
  shuffle->add_option("--split", split, "Dataset split")->capture_default_str();

  std::string probs = "0,0.05,0.1,0.2";
  auto* noise = app.add_subcommand("noise-test", "Decode latents with randomly flipped spikes");
  add_out(noise, c);
  add_checkpoint(noise, c);
  add_data(noise, c);
  add_seed(noise, c);
  noise->add_option("--probs", probs, "Comma-separated flip probabilities")->capture_default_str();
  noise->add_option("--split", split, "Dataset split")->capture_default_str();

  std::string arch;
  std::optional<double> rate;
  std::optional<int> steps;
  auto* energy = app.add_subcommand("energy", "Operation counts and energy estimate");
  add_out(energy, c);
  add_data(energy, c);
  energy->add_option("--checkpoint", c.checkpoint, "Model checkpoint");
  energy->add_option("--arch", arch, "full or desk");
  energy->add_option("--rate", rate, "Average firing rate (measured on data when omitted)");
  energy->add_option("--steps", steps, "Time window T");

  ProbeConfig pc;
  pc.epochs = 30;
  Index test_images = 0;
  auto* probe = app.add_subcommand("probe", "Classify digits from frozen encoder rates");
  add_out(probe, c);
  add_checkpoint(probe, c);
  add_data(probe, c);
  probe->add_option("--seed", pc.seed, "Probe seed")->capture_default_str();
  probe->add_option("--epochs", pc.epochs)->capture_default_str();
  probe->add_option("--lr", pc.lr)->capture_default_str();
  probe->add_option("--batch-size", pc.batch_size)->capture_default_str();
  probe->add_option("--test-images", test_images, "Test images (0 = all)")->capture_default_str();

  int bins = 20;
  auto* hist = app.add_subcommand("rate-hist", "Posterior and prior firing-rate histograms");
  add_out(hist, c);
  add_checkpoint(hist, c);
  add_data(hist, c);
  add_seed(hist, c);
  hist->add_option("--bins", bins)->capture_default_str();
  hist->add_option("--split", split, "Dataset split")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(c, tf);
    if (*gen) return cmd_generate(c, num, cols);
    if (*shuffle) return cmd_shuffle(c, dim, split);
    if (*noise) return cmd_noise(c, probs, split);
    if (*energy) return cmd_energy(c, arch, rate, steps);
    if (*probe) return cmd_probe(c, pc, test_images);
    if (*hist) return cmd_rate_hist(c, bins, split);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const LoadError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
