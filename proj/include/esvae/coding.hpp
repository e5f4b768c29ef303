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

// Input and output coding between images and spiking layers.

#ifndef ESVAE_CODING_HPP_
#define ESVAE_CODING_HPP_

#include "esvae/ops.hpp"
#include "esvae/tensor.hpp"

namespace esvae {

// Direct coding: the real-valued image (B, C, H, W) is the input current at
// every one of the `steps` time steps, giving a (T*B, C, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> encode_input(const Tensor<Scalar>& image, Index steps) {
  if (image.rank() != 4) throw DimensionError("encode_input: expected (B,C,H,W), got " + to_string(image.shape()));
  if (image.size() > 0 && (image.values().minCoeff() < Scalar(0) || image.values().maxCoeff() > Scalar(1))) {
    throw ValidationError("encode_input: pixel values must lie in [0, 1]");
  }
  return time_repeat(image, steps);
}

// Non-spiking readout: mean pre-threshold current over time, then sigmoid.
template <typename Scalar>
Tensor<Scalar> decode_output(const Tensor<Scalar>& current, Index steps) {
  if (current.rank() != 4) {
    throw DimensionError("decode_output: expected (T*B,C,H,W), got " + to_string(current.shape()));
  }
  return sigmoid(time_mean(current, steps));
}

}  // namespace esvae

#endif  // ESVAE_CODING_HPP_
