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
#include <optional>
#include <string>
#include <vector>

#include "bsvae/autodiff.hpp"
#include "bsvae/data.hpp"
#include "bsvae/model.hpp"
#include "bsvae/rng.hpp"

namespace bsvae {

enum class ObjectiveMode {
  // beta-VAE with fixed decoder variance sigma^2 = c.
  kConstantSigma,
  // Gaussian NLL evaluated at the per-sample optimal variance, plus beta*KL.
  kOptimalSigma,
  // Closed-form optimal-variance objective:
  //   (D/2) E[log(2 pi mse) + 1] + beta * KL.
  kBsVae,
};

const char* to_string(ObjectiveMode mode);
ObjectiveMode parse_objective_mode(const std::string& name);

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::kBsVae;
  double beta = 1.0;
  // Decoder variance for kConstantSigma.
  double c = 0.5;
  int mc_samples = 1;
  // Treat the optimal variance as a constant when differentiating.
  bool stop_sigma_gradient = false;

  void validate() const;
};

// Per-batch objective value on the tape plus the per-sample parts it was
// built from: loss = mean_i(distortion_i + beta * rate_i).
struct LossTerms {
  ad::Tensor loss;
  std::vector<double> rate;
  std::vector<double> distortion;
};

// Standard-normal noise of shape batch x mc_samples x latent_dim.
ad::Tensor draw_noise(CounterRng& rng, std::size_t batch, std::size_t mc_samples, std::size_t latent_dim);

LossTerms elbo_loss(const VaeModel& model, const ad::Tensor& x, const ObjectiveConfig& cfg, const ad::Tensor& eps);
LossTerms optimal_sigma_loss(const VaeModel& model, const ad::Tensor& x, const ObjectiveConfig& cfg,
                             const ad::Tensor& eps);
LossTerms bs_vae_loss(const VaeModel& model, const ad::Tensor& x, const ObjectiveConfig& cfg, const ad::Tensor& eps);
// Dispatches on cfg.mode.
LossTerms compute_objective(const VaeModel& model, const ad::Tensor& x, const ObjectiveConfig& cfg,
                            const ad::Tensor& eps);

// Gradient of `cfg`'s objective with respect to every model parameter, in
// VaeModel::parameters() order. Returns the loss value too.
struct ParameterGradients {
  double loss = 0.0;
  std::vector<ad::Tensor> grads;
};
ParameterGradients objective_gradients(const VaeModel& model, const ad::Tensor& x, const ObjectiveConfig& cfg,
                                       const ad::Tensor& eps);

// Max over parameter elements of |g1 - beta*g2| / (|g1| + 1e-12) where
//   g1 = grad of the constant-variance objective with (beta, sigma^2 = c)
//   g2 = grad of the beta = 1 objective with sigma^2 = beta*c.
// With `reference = kBsVae` (or kOptimalSigma) the second gradient comes from
// that objective at beta = 1 instead, which breaks the proportionality.
double check_equivalence(const VaeModel& model, const ad::Tensor& x, double beta, double c, const ad::Tensor& eps,
                         ObjectiveMode reference = ObjectiveMode::kConstantSigma);

// How a reconstruction error is turned into a likelihood.
enum class Interpretation {
  kConstHalf,      // sigma^2 = 1/2
  kConstBetaHalf,  // sigma^2 = beta/2
  kOptimal,        // per-sample optimal sigma^2 (lower bound on distortion)
  kBsVae,          // the BS-VAE objective's own distortion (same formula as kOptimal)
};

const char* to_string(Interpretation interpretation);
Interpretation parse_interpretation(const std::string& name);

// The interpretations reported for a model trained with `cfg`: three for
// constant-variance models, one for optimal-variance models.
std::vector<Interpretation> default_interpretations(const ObjectiveConfig& cfg);

struct ElboEstimate {
  Interpretation interpretation = Interpretation::kOptimal;
  double rate = 0.0;        // nats/sample
  double distortion = 0.0;  // nats/sample
  double elbo = 0.0;        // -(rate + distortion)
  double elbo_std_error = 0.0;
  int mc_samples = 1;
  std::size_t samples = 0;
};

// Mean per-sample ELBO over `dataset` under each interpretation. All
// interpretations share the same noise, so their differences are exact.
// `beta` only enters through kConstBetaHalf.
std::vector<ElboEstimate> evaluate_elbo(const VaeModel& model, const Dataset& dataset, double beta,
                                        const std::vector<Interpretation>& interpretations, int mc_samples,
                                        std::uint64_t seed, std::size_t batch_size = 500);
std::vector<ElboEstimate> evaluate_elbo(const VaeModel& model, const Dataset& dataset, const ObjectiveConfig& cfg,
                                        int mc_samples, std::uint64_t seed);

}  // namespace bsvae
