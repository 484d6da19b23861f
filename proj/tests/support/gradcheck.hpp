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

// Central finite-difference gradient oracle. Independent of the reverse-mode
// path: it only ever evaluates the function on constant tensors.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bsvae/autodiff.hpp"
#include "bsvae/rng.hpp"

namespace bsvae::testing {

using ScalarFn = std::function<ad::Tensor(const std::vector<ad::Tensor>&)>;

struct GradCheck {
  double worst_relative = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string first_failure;

  bool ok() const { return failures == 0; }
};

inline std::vector<double> finite_difference(const ScalarFn& f, const std::vector<ad::Tensor>& inputs,
                                             std::size_t which, double h = 1e-5) {
  std::vector<double> out(inputs[which].size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    auto plus = inputs;
    auto minus = inputs;
    plus[which] = inputs[which].detached();
    minus[which] = inputs[which].detached();
    plus[which].mutable_data()[j] += h;
    minus[which].mutable_data()[j] -= h;
    out[j] = (f(plus).item() - f(minus).item()) / (2.0 * h);
  }
  return out;
}

// Compares reverse-mode gradients of f at `inputs` with central differences.
// An element passes if |g - fd| <= rel_tol * max(|g|, |fd|) or
// |g - fd| <= abs_tol.
inline GradCheck gradcheck(const ScalarFn& f, const std::vector<ad::Tensor>& inputs, double h = 1e-5,
                           double rel_tol = 1e-4, double abs_tol = 1e-7) {
  ad::Tape tape;
  std::vector<ad::Tensor> params;
  for (const auto& t : inputs) {
    params.push_back(tape.parameter(t));
  }
  const ad::Gradients grads = tape.backward(f(params));

  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto fd = finite_difference(f, inputs, i, h);
    const ad::Tensor& g = grads.at(params[i]);
    for (std::size_t j = 0; j < fd.size(); ++j) {
      const double err = std::abs(g[j] - fd[j]);
      const double scale = std::max(std::abs(g[j]), std::abs(fd[j]));
      const double rel = scale > 0.0 ? err / scale : 0.0;
      ++result.checked;
      if (err > abs_tol) {
        result.worst_relative = std::max(result.worst_relative, rel);
      }
      if (!(err <= abs_tol || rel <= rel_tol)) {
        if (result.failures++ == 0) {
          std::ostringstream os;
          os << "input " << i << " element " << j << ": reverse " << g[j] << " vs fd " << fd[j];
          result.first_failure = os.str();
        }
      }
    }
  }
  return result;
}

inline ad::Tensor random_tensor(CounterRng& rng, ad::Shape shape, double lo, double hi) {
  std::vector<double> v(ad::element_count(shape));
  for (double& x : v) {
    x = rng.uniform(lo, hi);
  }
  return ad::Tensor(std::move(shape), std::move(v));
}

// Uniform magnitude in [lo, hi] with a random sign.
inline ad::Tensor random_signed(CounterRng& rng, ad::Shape shape, double lo, double hi) {
  std::vector<double> v(ad::element_count(shape));
  for (double& x : v) {
    x = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  return ad::Tensor(std::move(shape), std::move(v));
}

}  // namespace bsvae::testing
