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

#include "bsvae/distributions.hpp"

#include <limits>
#include <numbers>
#include <string>

#include "bsvae/error.hpp"

namespace bsvae {

using ad::Tensor;

DiagGaussian::DiagGaussian(Tensor mu_in, Tensor log_var_in) : mu(std::move(mu_in)), log_var(std::move(log_var_in)) {
  if (mu.shape() != log_var.shape()) {
    throw ShapeError("DiagGaussian: mu " + ad::to_string(mu.shape()) + " and log_var " +
                     ad::to_string(log_var.shape()) + " differ");
  }
  if (mu.rank() != 2) {
    throw ShapeError("DiagGaussian: expected batch x latent_dim, got " + ad::to_string(mu.shape()));
  }
}

ScalarGaussianDecoder::ScalarGaussianDecoder(Tensor mu_in, Tensor sigma2_in)
    : mu_x(std::move(mu_in)), sigma2_x(std::move(sigma2_in)) {
  if (mu_x.rank() != 2 || sigma2_x.rank() != 1 || sigma2_x.size() != mu_x.rows()) {
    throw ShapeError("ScalarGaussianDecoder: mu_x " + ad::to_string(mu_x.shape()) + " and sigma2_x " +
                     ad::to_string(sigma2_x.shape()) + " are incompatible");
  }
  for (std::size_t i = 0; i < sigma2_x.size(); ++i) {
    if (!(sigma2_x[i] >= kVarianceFloor)) {
      throw DomainError("decoder variance " + std::to_string(sigma2_x[i]) + " below floor for sample " +
                        std::to_string(i));
    }
  }
}

Tensor kl_to_standard_normal(const DiagGaussian& q) {
  const Tensor inner = ad::add_scalar(ad::sub(ad::add(ad::square(q.mu), ad::exp(q.log_var)), q.log_var), -1.0);
  return ad::scale(ad::row_sum(inner), 0.5);
}

Tensor gaussian_nll(const Tensor& x, const Tensor& mu_x, const Tensor& sigma2) {
  if (x.shape() != mu_x.shape() || x.rank() != 2) {
    throw ShapeError("gaussian_nll: x " + ad::to_string(x.shape()) + " vs mu_x " + ad::to_string(mu_x.shape()));
  }
  if (sigma2.rank() != 1 || sigma2.size() != x.rows()) {
    throw ShapeError("gaussian_nll: sigma2 " + ad::to_string(sigma2.shape()) + " vs batch " +
                     std::to_string(x.rows()));
  }
  for (std::size_t i = 0; i < sigma2.size(); ++i) {
    if (!(sigma2[i] >= kVarianceFloor)) {
      throw DomainError("gaussian_nll: variance " + std::to_string(sigma2[i]) + " below floor for sample " +
                        std::to_string(i));
    }
  }
  const double half_dim = 0.5 * static_cast<double>(x.cols());
  const Tensor squared_error = ad::row_sum(ad::square(ad::sub(x, mu_x)));
  const Tensor quadratic = ad::div(ad::scale(squared_error, 0.5), sigma2);
  const Tensor log_norm = ad::scale(ad::log(ad::scale(sigma2, 2.0 * std::numbers::pi)), half_dim);
  return ad::add(quadratic, log_norm);
}

Tensor gaussian_nll(const Tensor& x, const ScalarGaussianDecoder& decoder) {
  return gaussian_nll(x, decoder.mu_x, decoder.sigma2_x);
}

Tensor optimal_sigma2(const Tensor& x, const Tensor& mu_x) {
  if (x.shape() != mu_x.shape() || x.rank() != 2) {
    throw ShapeError("optimal_sigma2: x " + ad::to_string(x.shape()) + " vs mu_x " + ad::to_string(mu_x.shape()));
  }
  const Tensor mse = ad::row_mean(ad::square(ad::sub(x, mu_x)));
  return ad::clamp(mse, kVarianceFloor, std::numeric_limits<double>::infinity());
}

Tensor reparameterize(const DiagGaussian& q, const Tensor& eps) {
  if (eps.shape() != q.mu.shape()) {
    throw ShapeError("reparameterize: eps " + ad::to_string(eps.shape()) + " vs mu " + ad::to_string(q.mu.shape()));
  }
  const Tensor std_dev = ad::exp(ad::scale(q.log_var, 0.5));
  return ad::add(q.mu, ad::mul(std_dev, eps.detached()));
}

Tensor optimal_sigma_distortion(const Tensor& sigma2_star, std::size_t data_dim) {
  const double half_dim = 0.5 * static_cast<double>(data_dim);
  return ad::scale(ad::add_scalar(ad::log(ad::scale(sigma2_star, 2.0 * std::numbers::pi)), 1.0), half_dim);
}

}  // namespace bsvae
