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

#include "bsvae/objectives.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bsvae/distributions.hpp"
#include "bsvae/error.hpp"

namespace bsvae {

using ad::Tensor;

namespace {

Tensor noise_slice(const Tensor& eps, std::size_t sample) {
  const std::size_t batch = eps.shape()[0];
  const std::size_t mc = eps.shape()[1];
  const std::size_t latent = eps.shape()[2];
  std::vector<double> out(batch * latent);
  const auto src = eps.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < latent; ++j) {
      out[b * latent + j] = src[(b * mc + sample) * latent + j];
    }
  }
  return Tensor::matrix(batch, latent, std::move(out));
}

void check_noise(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps) {
  if (x.rank() != 2) {
    throw ShapeError("objective: x must be batch x data_dim, got " + ad::to_string(x.shape()));
  }
  const ad::Shape expected = {x.rows(), static_cast<std::size_t>(cfg.mc_samples), model.arch().latent_dim};
  if (eps.shape() != expected) {
    throw ShapeError("objective: eps " + ad::to_string(eps.shape()) + " expected " + ad::to_string(expected));
  }
}

// Shared skeleton: encode once, average the per-draw distortion over the
// noise draws, add beta * KL.
template <typename Distortion>
LossTerms assemble(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps,
                   Distortion distortion_of) {
  cfg.validate();
  check_noise(model, x, cfg, eps);
  const DiagGaussian q = encode(model, x);
  const Tensor rate = kl_to_standard_normal(q);

  Tensor distortion;
  for (int s = 0; s < cfg.mc_samples; ++s) {
    const Tensor z = reparameterize(q, noise_slice(eps, static_cast<std::size_t>(s)));
    const Tensor mu_x = decode(model, z);
    Tensor d = distortion_of(mu_x);
    distortion = s == 0 ? d : ad::add(distortion, d);
  }
  if (cfg.mc_samples > 1) {
    distortion = ad::scale(distortion, 1.0 / cfg.mc_samples);
  }

  LossTerms terms;
  terms.loss = ad::mean(ad::add(distortion, ad::scale(rate, cfg.beta)));
  terms.rate.assign(rate.data().begin(), rate.data().end());
  terms.distortion.assign(distortion.data().begin(), distortion.data().end());
  return terms;
}

void require_mode(const ObjectiveConfig& cfg, ObjectiveMode mode, const char* fn) {
  if (cfg.mode != mode) {
    throw ConfigError(std::string(fn) + " called with objective mode " + to_string(cfg.mode));
  }
}

}  // namespace

const char* to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::kConstantSigma:
      return "const";
    case ObjectiveMode::kOptimalSigma:
      return "optimal";
    case ObjectiveMode::kBsVae:
      return "bsvae";
  }
  return "unknown";
}

ObjectiveMode parse_objective_mode(const std::string& name) {
  if (name == "const") return ObjectiveMode::kConstantSigma;
  if (name == "optimal") return ObjectiveMode::kOptimalSigma;
  if (name == "bsvae") return ObjectiveMode::kBsVae;
  throw ConfigError("unknown objective mode '" + name + "' (expected const, optimal or bsvae)");
}

void ObjectiveConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw ConfigError("beta must be non-negative and finite");
  }
  if (mode == ObjectiveMode::kConstantSigma && !(c > 0.0 && std::isfinite(c))) {
    throw ConfigError("constant decoder variance c must be positive and finite");
  }
  if (mc_samples < 1) {
    throw ConfigError("mc_samples must be at least 1");
  }
}

Tensor draw_noise(CounterRng& rng, std::size_t batch, std::size_t mc_samples, std::size_t latent_dim) {
  std::vector<double> v(batch * mc_samples * latent_dim);
  for (double& e : v) {
    e = rng.normal();
  }
  return Tensor({batch, mc_samples, latent_dim}, std::move(v));
}

LossTerms elbo_loss(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps) {
  require_mode(cfg, ObjectiveMode::kConstantSigma, "elbo_loss");
  const Tensor sigma2 = Tensor::full({x.rank() == 2 ? x.rows() : 0}, cfg.c);
  return assemble(model, x, cfg, eps, [&](const Tensor& mu_x) { return gaussian_nll(x, mu_x, sigma2); });
}

LossTerms optimal_sigma_loss(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps) {
  require_mode(cfg, ObjectiveMode::kOptimalSigma, "optimal_sigma_loss");
  return assemble(model, x, cfg, eps, [&](const Tensor& mu_x) {
    Tensor sigma2 = optimal_sigma2(x, mu_x);
    if (cfg.stop_sigma_gradient) {
      sigma2 = sigma2.detached();
    }
    return gaussian_nll(x, mu_x, sigma2);
  });
}

LossTerms bs_vae_loss(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps) {
  require_mode(cfg, ObjectiveMode::kBsVae, "bs_vae_loss");
  const std::size_t data_dim = model.arch().data_dim;
  return assemble(model, x, cfg, eps, [&](const Tensor& mu_x) {
    const Tensor sigma2 = optimal_sigma2(x, mu_x);
    if (cfg.stop_sigma_gradient) {
      // The closed form has no gradient once sigma2 is frozen; use the NLL
      // form, which has the same value above the floor.
      return gaussian_nll(x, mu_x, sigma2.detached());
    }
    return optimal_sigma_distortion(sigma2, data_dim);
  });
}

LossTerms compute_objective(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg, const Tensor& eps) {
  switch (cfg.mode) {
    case ObjectiveMode::kConstantSigma:
      return elbo_loss(model, x, cfg, eps);
    case ObjectiveMode::kOptimalSigma:
      return optimal_sigma_loss(model, x, cfg, eps);
    case ObjectiveMode::kBsVae:
      return bs_vae_loss(model, x, cfg, eps);
  }
  throw ConfigError("unknown objective mode");
}

ParameterGradients objective_gradients(const VaeModel& model, const Tensor& x, const ObjectiveConfig& cfg,
                                       const Tensor& eps) {
  ad::Tape tape;
  VaeModel bound = model.bind(tape);
  const LossTerms terms = compute_objective(bound, x, cfg, eps);
  const ad::Gradients grads = tape.backward(terms.loss);
  ParameterGradients out;
  out.loss = terms.loss.item();
  for (const NamedParameter& p : bound.parameters()) {
    out.grads.push_back(grads.at(*p.value));
  }
  return out;
}

double check_equivalence(const VaeModel& model, const Tensor& x, double beta, double c, const Tensor& eps,
                         ObjectiveMode reference) {
  const int mc = static_cast<int>(eps.rank() == 3 ? eps.shape()[1] : 1);
  ObjectiveConfig weighted{ObjectiveMode::kConstantSigma, beta, c, mc, false};
  ObjectiveConfig unweighted{reference, 1.0, beta * c, mc, false};
  const auto g1 = objective_gradients(model, x, weighted, eps).grads;
  const auto g2 = objective_gradients(model, x, unweighted, eps).grads;

  double worst = 0.0;
  for (std::size_t p = 0; p < g1.size(); ++p) {
    for (std::size_t i = 0; i < g1[p].size(); ++i) {
      const double a = g1[p][i];
      const double b = beta * g2[p][i];
      worst = std::max(worst, std::abs(a - b) / (std::abs(a) + 1e-12));
    }
  }
  return worst;
}

const char* to_string(Interpretation interpretation) {
  switch (interpretation) {
    case Interpretation::kConstHalf:
      return "const_half";
    case Interpretation::kConstBetaHalf:
      return "const_beta_half";
    case Interpretation::kOptimal:
      return "optimal";
    case Interpretation::kBsVae:
      return "bsvae";
  }
  return "unknown";
}

Interpretation parse_interpretation(const std::string& name) {
  if (name == "const_half" || name == "half") return Interpretation::kConstHalf;
  if (name == "const_beta_half" || name == "betahalf") return Interpretation::kConstBetaHalf;
  if (name == "optimal") return Interpretation::kOptimal;
  if (name == "bsvae") return Interpretation::kBsVae;
  throw ConfigError("unknown interpretation '" + name + "'");
}

std::vector<Interpretation> default_interpretations(const ObjectiveConfig& cfg) {
  if (cfg.mode == ObjectiveMode::kConstantSigma) {
    return {Interpretation::kConstHalf, Interpretation::kConstBetaHalf, Interpretation::kOptimal};
  }
  return {Interpretation::kBsVae};
}

std::vector<ElboEstimate> evaluate_elbo(const VaeModel& model, const Dataset& dataset, double beta,
                                        const std::vector<Interpretation>& interpretations, int mc_samples,
                                        std::uint64_t seed, std::size_t batch_size) {
  if (mc_samples < 1) {
    throw ConfigError("mc_samples must be at least 1");
  }
  if (dataset.size() == 0) {
    throw ConfigError("cannot evaluate on an empty dataset");
  }
  if (interpretations.empty()) {
    throw ConfigError("no interpretations requested");
  }
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  const VaeModel constant = model.detached();
  const std::size_t latent = constant.arch().latent_dim;
  const std::size_t n_interp = interpretations.size();
  CounterRng rng(seed, Stream::kEval);

  // Per-interpretation running sums of distortion and squared ELBO.
  std::vector<double> distortion_sum(n_interp, 0.0);
  std::vector<double> elbo_sq_sum(n_interp, 0.0);
  double rate_sum = 0.0;

  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    const std::size_t end = std::min(dataset.size(), begin + batch_size);
    const std::size_t rows = end - begin;
    const Tensor x = dataset.batch(begin, end);
    const Tensor eps = draw_noise(rng, rows, static_cast<std::size_t>(mc_samples), latent);
    const DiagGaussian q = encode(constant, x);
    const Tensor rate = kl_to_standard_normal(q);

    std::vector<std::vector<double>> distortion(n_interp, std::vector<double>(rows, 0.0));
    for (int s = 0; s < mc_samples; ++s) {
      const Tensor z = reparameterize(q, noise_slice(eps, static_cast<std::size_t>(s)));
      const Tensor mu_x = decode(constant, z);
      for (std::size_t k = 0; k < n_interp; ++k) {
        Tensor d;
        switch (interpretations[k]) {
          case Interpretation::kConstHalf:
            d = gaussian_nll(x, mu_x, Tensor::full({rows}, 0.5));
            break;
          case Interpretation::kConstBetaHalf:
            d = gaussian_nll(x, mu_x, Tensor::full({rows}, 0.5 * beta));
            break;
          case Interpretation::kOptimal:
          case Interpretation::kBsVae:
            d = optimal_sigma_distortion(optimal_sigma2(x, mu_x), x.cols());
            break;
        }
        for (std::size_t i = 0; i < rows; ++i) {
          distortion[k][i] += d[i];
        }
      }
    }
    for (std::size_t i = 0; i < rows; ++i) {
      rate_sum += rate[i];
      for (std::size_t k = 0; k < n_interp; ++k) {
        const double dist = distortion[k][i] / mc_samples;
        distortion_sum[k] += dist;
        const double elbo = -(dist + rate[i]);
        elbo_sq_sum[k] += elbo * elbo;
      }
    }
  }

  const auto n = static_cast<double>(dataset.size());
  std::vector<ElboEstimate> out;
  for (std::size_t k = 0; k < n_interp; ++k) {
    ElboEstimate e;
    e.interpretation = interpretations[k];
    e.rate = rate_sum / n;
    e.distortion = distortion_sum[k] / n;
    e.elbo = -(e.rate + e.distortion);
    const double variance = std::max(0.0, elbo_sq_sum[k] / n - e.elbo * e.elbo);
    e.elbo_std_error = dataset.size() > 1 ? std::sqrt(variance / (n - 1.0)) : 0.0;
    e.mc_samples = mc_samples;
    e.samples = dataset.size();
    out.push_back(e);
  }
  return out;
}

std::vector<ElboEstimate> evaluate_elbo(const VaeModel& model, const Dataset& dataset, const ObjectiveConfig& cfg,
                                        int mc_samples, std::uint64_t seed) {
  return evaluate_elbo(model, dataset, cfg.beta, default_interpretations(cfg), mc_samples, seed);
}

}  // namespace bsvae
