// Copyright 2026 The bsvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bsvae/autodiff.hpp"
#include "bsvae/distributions.hpp"

namespace bsvae {

// Fully-connected encoder data_dim -> hidden... -> 2*latent_dim and decoder
// latent_dim -> reversed(hidden)... -> data_dim, tanh between hidden layers.
struct ArchSpec {
  std::uint32_t data_dim = 784;
  std::uint32_t latent_dim = 16;
  std::vector<std::uint32_t> hidden = {256, 128};

  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

struct DenseLayer {
  ad::Tensor weight;  // fan_in x fan_out
  ad::Tensor bias;    // fan_out
};

struct NamedParameter {
  std::string name;
  ad::Tensor* value;
};

inline constexpr double kLogVarClamp = 10.0;

class VaeModel {
 public:
  // Weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), biases zero. Deterministic
  // in `seed` (drawn from the init substream).
  static VaeModel init(std::uint64_t seed, const ArchSpec& arch);
  // All parameters zero.
  static VaeModel zeros(const ArchSpec& arch);
  // Rebuilds a model from a flat parameter list in parameters() order.
  static VaeModel from_parameters(const ArchSpec& arch, std::vector<ad::Tensor> params);

  const ArchSpec& arch() const { return arch_; }
  const std::vector<DenseLayer>& encoder() const { return encoder_; }
  const std::vector<DenseLayer>& decoder() const { return decoder_; }

  // Encoder layers then decoder layers, weight before bias.
  std::vector<NamedParameter> parameters();
  std::vector<ad::Tensor> parameter_values() const;
  std::size_t parameter_count() const;

  // Copy whose parameters are leaves on `tape`.
  VaeModel bind(ad::Tape& tape) const;
  // Copy with every tape link dropped.
  VaeModel detached() const;

  bool all_finite() const;
  bool same_values(const VaeModel& other) const;

 private:
  VaeModel(ArchSpec arch, std::vector<DenseLayer> encoder, std::vector<DenseLayer> decoder);

  ArchSpec arch_;
  std::vector<DenseLayer> encoder_;
  std::vector<DenseLayer> decoder_;
};

// x: batch x data_dim. log_var is clamped to [-kLogVarClamp, kLogVarClamp].
DiagGaussian encode(const VaeModel& model, const ad::Tensor& x);
// z: batch x latent_dim -> mu_x: batch x data_dim (no output nonlinearity).
ad::Tensor decode(const VaeModel& model, const ad::Tensor& z);

// Checkpoint layout (little-endian):
//   "BSV1"
//   u32 n, then n u32 extents: data_dim, latent_dim, hidden...
//   parameters as f64 in parameters() order, each tensor row-major.
std::vector<std::uint8_t> serialize_checkpoint(const VaeModel& model);
VaeModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const VaeModel& model, const std::filesystem::path& path);
VaeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace bsvae
