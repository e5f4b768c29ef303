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

// Dataset ingestion (IDX), resizing, batching, and file outputs (PGM/PPM
// montages, CSV tables).

#ifndef ESVAE_DATA_HPP_
#define ESVAE_DATA_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esvae/tensor.hpp"

namespace esvae {

struct Dataset {
  std::string name;
  Index count = 0, channels = 1, height = 0, width = 0;
  std::vector<float> pixels;  // (count, channels, height, width) in [0, 1]
  std::vector<int> labels;    // empty, or one label per image

  Index image_size() const { return channels * height * width; }
  bool has_labels() const { return !labels.empty(); }

  // Images at the given positions as a (k, C, H, W) tensor.
  Tensorf gather(std::span<const Index> indices) const;
  std::vector<int> gather_labels(std::span<const Index> indices) const;

  // First n images (or all when n exceeds the count).
  Dataset head(Index n) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Reads an IDX image file (and optionally its label file). Pixels are scaled
// by 1/255. Throws DataError on missing files, wrong magic, truncated
// payloads or mismatched counts.
Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt);

// Loads `<dir>/<split>-images-idx3-ubyte` (+ labels), keeps at most `limit`
// images when limit > 0, and resizes to `size` x `size`.
Dataset load_mnist_split(const std::string& dir, const std::string& split, Index limit, Index size);

// Bilinear resize to (target x target), half-pixel centres (align_corners
// false) with edge clamping.
Dataset resize_bilinear(const Dataset& ds, Index target);

// Deterministic shuffled batches over [0, n); the last partial batch is kept.
std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, std::uint64_t shuffle_seed);

// Tiles (N, C, H, W) images row-major with 2-pixel black gutters; C = 1
// writes binary PGM (P5), C = 3 binary PPM (P6).
void write_montage(const Tensorf& images, Index cols, const std::string& path);

// Header line then one line per row, values printed with 6 significant digits.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace esvae

#endif  // ESVAE_DATA_HPP_
