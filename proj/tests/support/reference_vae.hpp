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

// Plain-loop forward pass and objectives. Shares no code with the tape path
// beyond reading the parameter values.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bsvae/autodiff.hpp"
#include "bsvae/model.hpp"

namespace bsvae::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const ad::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      m[i][j] = t[i * t.cols() + j];
    }
  }
  return m;
}

inline Matrix dense(const std::vector<DenseLayer>& layers, Matrix h) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    const std::size_t in = w.rows();
    const std::size_t out = w.cols();
    Matrix next(h.size(), std::vector<double>(out));
    for (std::size_t i = 0; i < h.size(); ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        double acc = layers[l].bias[o];
        for (std::size_t k = 0; k < in; ++k) {
          acc += h[i][k] * w[k * out + o];
        }
        next[i][o] = l + 1 < layers.size() ? std::tanh(acc) : acc;
      }
    }
    h = std::move(next);
  }
  return h;
}

struct ReferencePass {
  std::vector<double> kl;                   // per sample
  std::vector<std::vector<double>> sq_err;  // [mc][sample] sum of squared residuals
  std::size_t dim = 0;
};

// eps: batch x mc x latent.
inline ReferencePass reference_pass(const VaeModel& model, const ad::Tensor& x, const ad::Tensor& eps) {
  const std::size_t latent = model.arch().latent_dim;
  const std::size_t batch = x.rows();
  const std::size_t mc = eps.shape()[1];
  const Matrix xs = to_matrix(x);
  const Matrix enc = dense(model.encoder(), xs);
  ReferencePass out;
  out.dim = x.cols();
  out.kl.assign(batch, 0.0);
  std::vector<std::vector<double>> mu(batch), lv(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < latent; ++j) {
      const double m = enc[i][j];
      const double l = std::clamp(enc[i][latent + j], -kLogVarClamp, kLogVarClamp);
      mu[i].push_back(m);
      lv[i].push_back(l);
      out.kl[i] += 0.5 * (m * m + std::exp(l) - l - 1.0);
    }
  }
  for (std::size_t s = 0; s < mc; ++s) {
    Matrix z(batch, std::vector<double>(latent));
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < latent; ++j) {
        z[i][j] = mu[i][j] + std::exp(0.5 * lv[i][j]) * eps[(i * mc + s) * latent + j];
      }
    }
    const Matrix rec = dense(model.decoder(), z);
    std::vector<double> err(batch, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t d = 0; d < out.dim; ++d) {
        err[i] += (xs[i][d] - rec[i][d]) * (xs[i][d] - rec[i][d]);
      }
    }
    out.sq_err.push_back(std::move(err));
  }
  return out;
}

inline double nll(double sq_err, double sigma2, std::size_t dim) {
  return sq_err / (2.0 * sigma2) + 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * sigma2);
}

// Per-sample distortion averaged over the draws; sigma2 < 0 means optimal.
inline std::vector<double> reference_distortion(const ReferencePass& pass, double sigma2) {
  std::vector<double> d(pass.kl.size(), 0.0);
  for (const auto& err : pass.sq_err) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s2 = sigma2 > 0.0 ? sigma2 : std::max(err[i] / pass.dim, 1e-6);
      d[i] += nll(err[i], s2, pass.dim);
    }
  }
  for (double& v : d) {
    v /= static_cast<double>(pass.sq_err.size());
  }
  return d;
}

}  // namespace bsvae::testing
