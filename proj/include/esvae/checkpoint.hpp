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

// Binary checkpoints.
//
//   "ESVAECKPT"                   9 bytes
//   u32 version
//   u32 n, n bytes                config text (to_text form)
//   i32 epoch, i64 optimizer step, i64 batch index
//   u32 tensor count, then per tensor:
//     u32 n, n bytes name; u32 rank; rank x i64 dims; float32 payload
//
// All integers and floats are little-endian. Tensors are the model
// parameters, tdBN running statistics ("<unit>.running_mean", ".running_var",
// ".stats_initialized") and, when present, the AdamW moments
// ("adam.m/<param>", "adam.v/<param>").

#ifndef ESVAE_CHECKPOINT_HPP_
#define ESVAE_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "esvae/model.hpp"
#include "esvae/trainer.hpp"

namespace esvae {

inline constexpr char kCheckpointMagic[] = "ESVAECKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  int epoch = 0;
  long optimizer_step = 0;
  Index batch_index = 0;
  std::map<std::string, Tensorf> tensors;
};

// Serializes to bytes; `trainer` adds optimizer state when given.
std::string encode_checkpoint(EsvaeModel& model, const Trainer* trainer, int epoch);

// Parses bytes. Throws LoadError on bad magic, unknown version or
// truncated/corrupt content.
Checkpoint decode_checkpoint(const std::string& bytes);

// Atomic write (temporary file then rename).
void save_checkpoint(const std::string& path, EsvaeModel& model, const Trainer* trainer, int epoch);

Checkpoint read_checkpoint(const std::string& path);

// Builds a model from a parsed checkpoint. Throws LoadError when a tensor is
// missing or has the wrong shape; nothing is returned on failure.
EsvaeModel restore_model(const Checkpoint& ckpt);

// Copies optimizer moments and counters into a trainer built on a restored
// model.
void restore_trainer(const Checkpoint& ckpt, EsvaeModel& model, Trainer& trainer);

// read_checkpoint + restore_model.
EsvaeModel load_model(const std::string& path);

}  // namespace esvae

#endif  // ESVAE_CHECKPOINT_HPP_
