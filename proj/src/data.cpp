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

#include "esvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "esvae/random.hpp"

namespace esvae {

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
  if (offset + 4 > buf.size()) throw DataError(path + ": truncated IDX header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Tensorf Dataset::gather(std::span<const Index> indices) const {
  const Index k = static_cast<Index>(indices.size()), sz = image_size();
  Buffer<float> v(k * sz);
  for (Index i = 0; i < k; ++i) {
    const Index src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= count) throw ValidationError("Dataset::gather: index out of range");
    std::copy_n(pixels.data() + src * sz, sz, v.data() + i * sz);
  }
  return Tensorf({k, channels, height, width}, std::move(v));
}

std::vector<int> Dataset::gather_labels(std::span<const Index> indices) const {
  if (!has_labels()) throw ValidationError("dataset '" + name + "' has no labels");
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

Dataset Dataset::head(Index n) const {
  Dataset out = *this;
  if (n >= count) return out;
  out.count = n;
  out.pixels.resize(static_cast<std::size_t>(n * image_size()));
  if (has_labels()) out.labels.resize(static_cast<std::size_t>(n));
  return out;
}

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  const auto buf = read_all(images_path);
  const std::uint32_t magic = read_be32(buf, 0, images_path);
  if (magic != kIdxImageMagic) {
    throw DataError(images_path + ": bad IDX image magic " + hex(magic) + " (expected " + hex(kIdxImageMagic) + ")");
  }
  Dataset ds;
  ds.name = std::filesystem::path(images_path).filename().string();
  ds.count = read_be32(buf, 4, images_path);
  ds.height = read_be32(buf, 8, images_path);
  ds.width = read_be32(buf, 12, images_path);
  const std::size_t payload = static_cast<std::size_t>(ds.count * ds.height * ds.width);
  if (buf.size() < 16 + payload) {
    throw DataError(images_path + ": truncated payload, expected " + std::to_string(payload) + " pixel bytes, found " +
                    std::to_string(buf.size() - 16));
  }
  ds.pixels.resize(payload);
  for (std::size_t i = 0; i < payload; ++i) ds.pixels[i] = static_cast<float>(buf[16 + i]) / 255.0f;

  if (labels_path) {
    const auto lbuf = read_all(*labels_path);
    const std::uint32_t lmagic = read_be32(lbuf, 0, *labels_path);
    if (lmagic != kIdxLabelMagic) {
      throw DataError(*labels_path + ": bad IDX label magic " + hex(lmagic) + " (expected " + hex(kIdxLabelMagic) +
                      ")");
    }
    const Index n = read_be32(lbuf, 4, *labels_path);
    if (n != ds.count) {
      throw DataError(*labels_path + ": " + std::to_string(n) + " labels for " + std::to_string(ds.count) + " images");
    }
    if (lbuf.size() < 8 + static_cast<std::size_t>(n)) throw DataError(*labels_path + ": truncated payload");
    ds.labels.assign(lbuf.begin() + 8, lbuf.begin() + 8 + n);
  }
  return ds;
}

Dataset load_mnist_split(const std::string& dir, const std::string& split, Index limit, Index size) {
  const auto base = std::filesystem::path(dir);
  const auto images = base / (split + "-images-idx3-ubyte");
  const auto labels = base / (split + "-labels-idx1-ubyte");
  if (!std::filesystem::exists(images)) throw DataError("dataset file not found: " + images.string());
  Dataset ds = load_idx(images.string(),
                        std::filesystem::exists(labels) ? std::optional<std::string>(labels.string()) : std::nullopt);
  if (limit > 0) ds = ds.head(limit);
  if (size > 0 && (ds.height != size || ds.width != size)) ds = resize_bilinear(ds, size);
  return ds;
}

Dataset resize_bilinear(const Dataset& ds, Index target) {
  if (target < 1) throw ValidationError("resize_bilinear: target size must be positive");
  if (ds.height == target && ds.width == target) return ds;
  Dataset out = ds;
  out.height = out.width = target;
  out.pixels.assign(static_cast<std::size_t>(ds.count * ds.channels * target * target), 0.0f);

  struct Tap {
    Index lo, hi;
    double frac;
  };
  auto taps = [target](Index src) {
    std::vector<Tap> t(static_cast<std::size_t>(target));
    const double scale = static_cast<double>(src) / static_cast<double>(target);
    for (Index i = 0; i < target; ++i) {
      const double pos = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
      const Index lo = std::min(static_cast<Index>(pos), src - 1);
      const Index hi = std::min(lo + 1, src - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, pos - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(ds.height), tx = taps(ds.width);
  for (Index n = 0; n < ds.count * ds.channels; ++n) {
    const float* src = ds.pixels.data() + n * ds.height * ds.width;
    float* dst = out.pixels.data() + n * target * target;
    for (Index y = 0; y < target; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (Index x = 0; x < target; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const double top = src[a.lo * ds.width + b.lo] * (1.0 - b.frac) + src[a.lo * ds.width + b.hi] * b.frac;
        const double bottom = src[a.hi * ds.width + b.lo] * (1.0 - b.frac) + src[a.hi * ds.width + b.hi] * b.frac;
        const double v = top * (1.0 - a.frac) + bottom * a.frac;
        dst[y * target + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ValidationError("make_batches: batch size must be at least 1");
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng(shuffle_seed).shuffle(order);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < n; start += batch_size) {
    const Index end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

void write_montage(const Tensorf& images, Index cols, const std::string& path) {
  if (images.rank() != 4) throw DimensionError("write_montage: expected (N,C,H,W), got " + to_string(images.shape()));
  const Index n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3) throw ValidationError("write_montage: images need 1 or 3 channels");
  if (n < 1 || cols < 1) throw ValidationError("write_montage: need at least one image and one column");
  constexpr Index kGutter = 2;
  cols = std::min(cols, n);
  const Index rows = (n + cols - 1) / cols;
  const Index width = cols * w + (cols - 1) * kGutter;
  const Index height = rows * h + (rows - 1) * kGutter;
  std::string canvas(static_cast<std::size_t>(width * height * c), '\0');
  for (Index k = 0; k < n; ++k) {
    const Index oy = (k / cols) * (h + kGutter), ox = (k % cols) * (w + kGutter);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        for (Index ch = 0; ch < c; ++ch) {
          const float p = images[((k * c + ch) * h + y) * w + x];
          const long q = std::lround(std::clamp(static_cast<double>(p), 0.0, 1.0) * 255.0);
          canvas[static_cast<std::size_t>(((oy + y) * width + (ox + x)) * c + ch)] = static_cast<char>(q);
        }
      }
    }
  }
  std::ostringstream os;
  os << (c == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << '\n' << 255 << '\n';
  write_file_atomic(path, os.str() + canvas);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::string text;
  for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
  text += '\n';
  char buf[32];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.6g", row[i]);
      if (i) text += ',';
      text += buf;
    }
    text += '\n';
  }
  write_file_atomic(path, text);
}

}  // namespace esvae
