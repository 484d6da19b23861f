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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsvae/autodiff.hpp"
#include "bsvae/data.hpp"
#include "bsvae/model.hpp"
#include "bsvae/objectives.hpp"

namespace bsvae {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& parameter)
      : std::runtime_error("non-finite gradient in parameter " + parameter), parameter_(parameter) {}

  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

// One AdamW update with decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
// Checks every gradient before touching anything; a non-finite entry throws
// NonFiniteGradientError and leaves params and state unchanged.
void adamw_step(std::span<const NamedParameter> params, std::span<const ad::Tensor> grads, AdamWState& state,
                const AdamWConfig& cfg);

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 128;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double rate = 0.0;
  double distortion = 0.0;
  double wall_ms = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> records;
};

struct TrainOptions {
  // Off by default so that traces are reproducible byte for byte; wall_ms is
  // then written as 0.
  bool record_wall_time = false;
};

struct TrainResult {
  VaeModel model;
  TrainTrace trace;
  bool diverged = false;
  std::string failure;
};

// epochs * ceil(N / batch_size) AdamW steps. Shuffling and noise come from
// substreams of cfg.seed. Stops at the first non-finite loss, gradient or
// parameter and returns the trace so far with diverged = true.
TrainResult train(const VaeModel& model, const Dataset& dataset, const TrainConfig& cfg, TrainOptions options = {});

// CSV: header "epoch,loss,rate,distortion,wall_ms", floats with 17
// significant digits.
std::string trace_to_csv(const TrainTrace& trace);
TrainTrace trace_from_csv(const std::string& text);
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);

// printf("%.17g") for one value; shared by all CSV writers.
std::string format_double(double value);

}  // namespace bsvae
