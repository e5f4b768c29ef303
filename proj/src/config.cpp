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

#include "esvae/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace esvae {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: bad value '" + std::string(value) + "' for key '" + std::string(key) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    double back = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    if (back == v) break;
  }
  return buf;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (steps < 1) fail("steps must be positive");
  if (latent_dim < 1) fail("latent_dim must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (epochs < 0) fail("epochs must be nonnegative");
  if (image_channels != 1 && image_channels != 3) fail("image_channels must be 1 or 3");
  if (!(lr > 0.0) || !(bottleneck_lr > 0.0)) fail("learning rates must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be nonnegative");
  if (lambda_mmd < 0.0) fail("lambda_mmd must be nonnegative");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must lie in (0, 1]");
  try {
    lif().validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
  const int stages = extra_layer ? 5 : 4;
  if (image_size < 1 || image_size % (1 << stages) != 0) {
    fail("image_size " + std::to_string(image_size) + " must be a positive multiple of " +
         std::to_string(1 << stages) + " for " + std::to_string(stages) + " stride-2 stages");
  }
}

ModelConfig ModelConfig::desk(int steps) {
  ModelConfig cfg;
  cfg.arch_scale = ArchScale::desk;
  cfg.steps = steps;
  return cfg;
}

std::string to_string(ArchScale scale) { return scale == ArchScale::full ? "full" : "desk"; }

std::string to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "steps = " << cfg.steps << '\n'
     << "v_theta = " << format_double(cfg.v_theta) << '\n'
     << "decay = " << format_double(cfg.decay) << '\n'
     << "alpha = " << format_double(cfg.alpha) << '\n'
     << "latent_dim = " << cfg.latent_dim << '\n'
     << "lambda_mmd = " << format_double(cfg.lambda_mmd) << '\n'
     << "lr = " << format_double(cfg.lr) << '\n'
     << "weight_decay = " << format_double(cfg.weight_decay) << '\n'
     << "bottleneck_lr = " << format_double(cfg.bottleneck_lr) << '\n'
     << "epochs = " << cfg.epochs << '\n'
     << "batch_size = " << cfg.batch_size << '\n'
     << "arch_scale = " << to_string(cfg.arch_scale) << '\n'
     << "seed = " << cfg.seed << '\n'
     << "image_size = " << cfg.image_size << '\n'
     << "image_channels = " << cfg.image_channels << '\n'
     << "extra_layer = " << (cfg.extra_layer ? "true" : "false") << '\n'
     << "grad_clip = " << format_double(cfg.grad_clip) << '\n'
     << "mmd_sigma2 = " << format_double(cfg.mmd_sigma2) << '\n';
  return os.str();
}

void apply_setting(ModelConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "steps") cfg.steps = parse_number<int>(key, value);
  else if (key == "v_theta") cfg.v_theta = parse_number<double>(key, value);
  else if (key == "decay") cfg.decay = parse_number<double>(key, value);
  else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
  else if (key == "latent_dim") cfg.latent_dim = parse_number<int>(key, value);
  else if (key == "lambda_mmd") cfg.lambda_mmd = parse_number<double>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_number<double>(key, value);
  else if (key == "bottleneck_lr") cfg.bottleneck_lr = parse_number<double>(key, value);
  else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "image_size") cfg.image_size = parse_number<int>(key, value);
  else if (key == "image_channels") cfg.image_channels = parse_number<int>(key, value);
  else if (key == "extra_layer") cfg.extra_layer = parse_bool(key, value);
  else if (key == "grad_clip") cfg.grad_clip = parse_number<double>(key, value);
  else if (key == "mmd_sigma2") cfg.mmd_sigma2 = parse_number<double>(key, value);
  else if (key == "arch_scale") {
    if (value == "full") cfg.arch_scale = ArchScale::full;
    else if (value == "desk") cfg.arch_scale = ArchScale::desk;
    else throw ConfigError("config: arch_scale must be 'full' or 'desk', got '" + std::string(value) + "'");
  } else {
    throw ConfigError("config: unknown key '" + std::string(key) + "'");
  }
}

ModelConfig parse_config(std::string_view text, ModelConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

ModelConfig load_config(const std::string& path, ModelConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

}  // namespace esvae
