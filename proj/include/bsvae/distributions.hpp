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

// Closed-form Gaussian quantities shared by every objective. All results are
// per-sample values in nats; all functions accept constants or tape tensors.

#include "bsvae/autodiff.hpp"

namespace bsvae {

// Lower bound for the decoder variance. Keeps log(sigma^2) finite for
// samples that are reconstructed exactly.
inline constexpr double kVarianceFloor = 1e-6;

// q(z|x) = N(mu, diag(exp(log_var))), both batch x latent_dim.
struct DiagGaussian {
  DiagGaussian(ad::Tensor mu, ad::Tensor log_var);

  ad::Tensor mu;
  ad::Tensor log_var;
};

// p(x|z) = N(mu_x, sigma2_x I) with one variance per sample.
struct ScalarGaussianDecoder {
  ScalarGaussianDecoder(ad::Tensor mu_x, ad::Tensor sigma2_x);

  ad::Tensor mu_x;      // batch x data_dim
  ad::Tensor sigma2_x;  // batch
};

// KL(q || N(0, I)) per sample: 0.5 * sum_j (mu_j^2 + s_j^2 - log s_j^2 - 1).
ad::Tensor kl_to_standard_normal(const DiagGaussian& q);

// -log N(x; mu_x, sigma2 I) per sample:
//   sum_d (x_d - mu_d)^2 / (2 sigma2) + (D/2) log(2 pi sigma2).
// Throws DomainError if any sigma2 is below kVarianceFloor.
ad::Tensor gaussian_nll(const ad::Tensor& x, const ad::Tensor& mu_x, const ad::Tensor& sigma2);
ad::Tensor gaussian_nll(const ad::Tensor& x, const ScalarGaussianDecoder& decoder);

// Per-sample minimizer of sigma2 -> gaussian_nll(x, mu_x, sigma2):
// max(mean_d (x_d - mu_d)^2, kVarianceFloor). Differentiable through mu_x
// above the floor, zero gradient at the floor.
ad::Tensor optimal_sigma2(const ad::Tensor& x, const ad::Tensor& mu_x);

// z = mu + exp(log_var / 2) * eps. eps is treated as a constant.
ad::Tensor reparameterize(const DiagGaussian& q, const ad::Tensor& eps);

// Same as gaussian_nll evaluated at optimal_sigma2, written in closed form:
// (D/2) (log(2 pi sigma2*) + 1).
ad::Tensor optimal_sigma_distortion(const ad::Tensor& sigma2_star, std::size_t data_dim);

}  // namespace bsvae
