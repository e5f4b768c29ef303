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

#include "esvae/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "esvae/data.hpp"

namespace esvae {

namespace {

static_assert(sizeof(float) == 4);

template <typename T>
void put(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_tensor(std::string& out, const std::string& name, const Shape& shape, const Buffer<float>& values) {
  put_string(out, name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (Index d : shape) put<std::int64_t>(out, d);
  for (Index i = 0; i < values.size(); ++i) put<float>(out, values(i));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw LoadError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string stats_name(const std::string& unit, const char* field) { return unit + "." + field; }

// Optimizer groups are not ordered like model.parameters(); match by identity.
std::string param_name(EsvaeModel& model, const Tensorf& t) {
  for (const auto& p : model.parameters())
    if (p.tensor.id() == t.id()) return p.name;
  throw ContractError("optimizer parameter is not part of the model");
}

const Tensorf& find(const Checkpoint& ckpt, const std::string& name, const Shape& shape) {
  auto it = ckpt.tensors.find(name);
  if (it == ckpt.tensors.end()) throw LoadError("checkpoint has no tensor '" + name + "'");
  if (it->second.shape() != shape) {
    throw LoadError("checkpoint tensor '" + name + "' has shape " + to_string(it->second.shape()) + ", model expects " +
                    to_string(shape));
  }
  return it->second;
}

}  // namespace

std::string encode_checkpoint(EsvaeModel& model, const Trainer* trainer, int epoch) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, to_text(model.config()));
  put<std::int32_t>(out, epoch);
  put<std::int64_t>(out, trainer ? trainer->step_count() : 0);
  put<std::int64_t>(out, trainer ? trainer->batch_index() : 0);

  std::string body;
  std::uint32_t count = 0;
  for (const auto& p : model.parameters()) {
    put_tensor(body, p.name, p.tensor.shape(), p.tensor.values());
    ++count;
  }
  for (const auto& s : model.norm_stats()) {
    const Index c = s.stats->running_mean.size();
    put_tensor(body, stats_name(s.name, "running_mean"), {c}, s.stats->running_mean);
    put_tensor(body, stats_name(s.name, "running_var"), {c}, s.stats->running_var);
    Buffer<float> flag(1);
    flag(0) = s.stats->initialized ? 1.0f : 0.0f;
    put_tensor(body, stats_name(s.name, "stats_initialized"), {1}, flag);
    count += 3;
  }
  if (trainer) {
    auto& opt = const_cast<Trainer*>(trainer)->optimizer();
    std::size_t k = 0;
    for (auto& g : opt.groups()) {
      for (auto& p : g.params) {
        const auto& mom = opt.moments()[k++];
        if (mom.m.size() != p.size()) continue;  // before the first step
        const std::string name = param_name(model, p);
        put_tensor(body, "adam.m/" + name, p.shape(), mom.m);
        put_tensor(body, "adam.v/" + name, p.shape(), mom.v);
        count += 2;
      }
    }
  }
  put<std::uint32_t>(out, count);
  return out + body;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (bytes.size() < magic_len || bytes.compare(0, magic_len, kCheckpointMagic) != 0) {
    throw LoadError("not a checkpoint: bad magic");
  }
  const std::string tail = bytes.substr(magic_len);
  Reader r(tail);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(r.get_string("config"));
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config block: ") + e.what());
  }
  ckpt.epoch = r.get<std::int32_t>("epoch");
  ckpt.optimizer_step = r.get<std::int64_t>("optimizer step");
  ckpt.batch_index = r.get<std::int64_t>("batch index");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string("tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw LoadError("checkpoint tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    Index n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::int64_t>("tensor dims");
      if (dim < 0 || dim > (Index{1} << 32)) throw LoadError("checkpoint tensor '" + name + "' has a bad dimension");
      shape.push_back(dim);
      n *= dim;
    }
    r.need(static_cast<std::size_t>(n) * 4, "tensor payload");
    Buffer<float> v(n);
    for (Index k = 0; k < n; ++k) v(k) = r.get<float>("tensor payload");
    ckpt.tensors.emplace(std::move(name), Tensorf(shape, std::move(v)));
  }
  if (r.remaining() != 0) throw LoadError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, EsvaeModel& model, const Trainer* trainer, int epoch) {
  write_file_atomic(path, encode_checkpoint(model, trainer, epoch));
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path);
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

EsvaeModel restore_model(const Checkpoint& ckpt) {
  EsvaeModel model(ckpt.config);
  for (auto& p : model.parameters()) p.tensor.values() = find(ckpt, p.name, p.tensor.shape()).values();
  for (auto& s : model.norm_stats()) {
    const Index c = s.stats->running_mean.size();
    s.stats->running_mean = find(ckpt, stats_name(s.name, "running_mean"), {c}).values();
    s.stats->running_var = find(ckpt, stats_name(s.name, "running_var"), {c}).values();
    s.stats->initialized = find(ckpt, stats_name(s.name, "stats_initialized"), {1}).values()(0) != 0.0f;
  }
  return model;
}

void restore_trainer(const Checkpoint& ckpt, EsvaeModel& model, Trainer& trainer) {
  auto& opt = trainer.optimizer();
  std::size_t k = 0;
  for (auto& g : opt.groups()) {
    for (auto& p : g.params) {
      const std::string name = param_name(model, p);
      auto& mom = opt.moments()[k++];
      if (ckpt.tensors.count("adam.m/" + name) == 0) {
        mom = {};
        continue;
      }
      mom.m = find(ckpt, "adam.m/" + name, p.shape()).values();
      mom.v = find(ckpt, "adam.v/" + name, p.shape()).values();
    }
  }
  opt.set_step_count(ckpt.optimizer_step);
  trainer.set_batch_index(ckpt.batch_index);
}

EsvaeModel load_model(const std::string& path) { return restore_model(read_checkpoint(path)); }

}  // namespace esvae
