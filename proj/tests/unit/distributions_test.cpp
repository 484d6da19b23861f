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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bsvae/distributions.hpp"
#include "bsvae/error.hpp"
#include "bsvae/rng.hpp"
#include "gradcheck.hpp"

namespace bsvae {
namespace {

using ad::Tensor;
using testing::random_signed;
using testing::random_tensor;

// Monte-Carlo estimate of E_q[log q(z) - log p(z)] for one sample row,
// written directly from the Gaussian densities.
struct McEstimate {
  double mean;
  double std_error;
};

McEstimate kl_monte_carlo(const std::vector<double>& mu, const std::vector<double>& log_var, std::size_t draws,
                          std::uint64_t seed) {
  CounterRng rng(seed, 77);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    double log_ratio = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const double sd = std::exp(0.5 * log_var[j]);
      const double e = rng.normal();
      const double z = mu[j] + sd * e;
      const double log_q = -0.5 * std::log(2 * std::numbers::pi) - 0.5 * log_var[j] - 0.5 * e * e;
      const double log_p = -0.5 * std::log(2 * std::numbers::pi) - 0.5 * z * z;
      log_ratio += log_q - log_p;
    }
    sum += log_ratio;
    sum_sq += log_ratio * log_ratio;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = (sum_sq / n - mean * mean) * n / (n - 1);
  return {mean, std::sqrt(var / n)};
}

TEST(Kl, PriorEqualsPosteriorGivesZero) {
  for (std::size_t dim : {1u, 4u, 32u}) {
    const DiagGaussian q(Tensor::zeros({3, dim}), Tensor::zeros({3, dim}));
    const Tensor kl = kl_to_standard_normal(q);
    ASSERT_EQ(kl.shape(), (ad::Shape{3}));
    for (double v : kl.data()) {
      EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Kl, UnitMeanShift) {
  const DiagGaussian q(Tensor::matrix(1, 1, {1.0}), Tensor::matrix(1, 1, {0.0}));
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(q)[0], 0.5);
}

TEST(Kl, MatchesMonteCarlo) {
  CounterRng rng(11, 2);
  for (int setting = 0; setting < 3; ++setting) {
    const Tensor mu = random_signed(rng, {1, 8}, 0.0, 1.5);
    const Tensor lv = random_signed(rng, {1, 8}, 0.0, 1.0);
    const double closed = kl_to_standard_normal(DiagGaussian(mu, lv))[0];
    const auto mc = kl_monte_carlo({mu.data().begin(), mu.data().end()}, {lv.data().begin(), lv.data().end()},
                                   200000, 100 + setting);
    EXPECT_LE(std::abs(closed - mc.mean), 3.0 * mc.std_error) << "closed " << closed << " mc " << mc.mean;
  }
}

TEST(Kl, NonNegative) {
  CounterRng rng(5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const DiagGaussian q(random_signed(rng, {4, 6}, 0, 3), random_signed(rng, {4, 6}, 0, 9));
    const Tensor kl = kl_to_standard_normal(q);
    for (double v : kl.data()) {
      EXPECT_GE(v, -1e-12);
    }
  }
}

TEST(DiagGaussian, ShapeMismatchRejected) {
  EXPECT_THROW(DiagGaussian(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST(GaussianNll, PerfectReconstructionAtUnitNormaliser) {
  const double sigma2 = 1.0 / (2.0 * std::numbers::pi);
  const Tensor x = Tensor::matrix(2, 5, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  const Tensor nll = gaussian_nll(x, x, Tensor::full({2}, sigma2));
  EXPECT_NEAR(nll[0], 0.0, 1e-15);
  EXPECT_NEAR(nll[1], 0.0, 1e-15);
}

TEST(GaussianNll, UnitResidualUnitVariance) {
  // 0.5 + 0.5 * log(2 pi), evaluated to 21 digits with mpmath.
  constexpr double kExpected = 1.41893853320467274178;
  const Tensor one = gaussian_nll(Tensor::matrix(1, 1, {1.0}), Tensor::matrix(1, 1, {0.0}), Tensor::vector({1.0}));
  EXPECT_NEAR(one[0], kExpected, 1e-15);
  const Tensor two =
      gaussian_nll(Tensor::matrix(1, 2, {1.0, 1.0}), Tensor::matrix(1, 2, {0.0, 0.0}), Tensor::vector({1.0}));
  EXPECT_NEAR(two[0], 2.0 * kExpected, 1e-15);
}

TEST(GaussianNll, VarianceBelowFloorRejected) {
  const Tensor x = Tensor::zeros({1, 3});
  EXPECT_THROW(gaussian_nll(x, x, Tensor::vector({kVarianceFloor / 2})), DomainError);
  EXPECT_NO_THROW(gaussian_nll(x, x, Tensor::vector({kVarianceFloor})));
  EXPECT_THROW(ScalarGaussianDecoder(x, Tensor::vector({0.0})), DomainError);
}

TEST(GaussianNll, GradientVanishesAtMean) {
  CounterRng rng(9, 9);
  const Tensor x = random_tensor(rng, {3, 6}, 0, 1);
  ad::Tape tape;
  const Tensor mu = tape.parameter(x);
  const auto grads = tape.backward(ad::sum(gaussian_nll(x, mu, Tensor::full({3}, 0.3))));
  for (double g : grads.at(mu).data()) {
    EXPECT_EQ(g, 0.0);
  }
}

TEST(OptimalSigma2, ClampedAtFloorForPerfectReconstruction) {
  const Tensor x = Tensor::full({2, 4}, 0.5);
  const Tensor s = optimal_sigma2(x, x);
  EXPECT_EQ(s[0], kVarianceFloor);
  EXPECT_EQ(s[1], kVarianceFloor);
}

TEST(OptimalSigma2, ConstantResidual) {
  const Tensor x = Tensor::full({1, 7}, 0.6);
  const Tensor mu = Tensor::full({1, 7}, 0.5);
  EXPECT_NEAR(optimal_sigma2(x, mu)[0], 0.01, 1e-15);
}

TEST(OptimalSigma2, IsGridSearchMinimiser) {
  CounterRng rng(13, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(rng, {1, 16}, 0, 1);
    const Tensor mu = random_tensor(rng, {1, 16}, 0, 1);
    const double star = optimal_sigma2(x, mu)[0];
    auto nll_at = [&](double s2) { return gaussian_nll(x, mu, Tensor::vector({s2}))[0]; };
    EXPECT_LE(nll_at(star), nll_at(star * std::exp(0.1)));
    EXPECT_LE(nll_at(star), nll_at(star * std::exp(-0.1)));

    // Grid over log sigma2 in [-8, 1], step 1e-3.
    double best_log = -8.0;
    double best = nll_at(std::exp(best_log));
    for (double lg = -8.0; lg <= 1.0; lg += 1e-3) {
      const double v = nll_at(std::exp(lg));
      if (v < best) {
        best = v;
        best_log = lg;
      }
    }
    EXPECT_NEAR(best_log, std::log(star), 1e-3);
  }
}

TEST(OptimalSigma2, ZeroGradientAtFloor) {
  const Tensor x = Tensor::full({1, 4}, 0.5);
  ad::Tape tape;
  const Tensor mu = tape.parameter(x);
  const auto grads = tape.backward(ad::sum(optimal_sigma2(x, mu)));
  for (double g : grads.at(mu).data()) {
    EXPECT_EQ(g, 0.0);
  }
}

TEST(Reparameterize, ZeroNoiseReturnsMean) {
  CounterRng rng(4, 4);
  const Tensor mu = random_signed(rng, {3, 2}, 0, 2);
  const Tensor lv = random_signed(rng, {3, 2}, 0, 2);
  EXPECT_TRUE(reparameterize(DiagGaussian(mu, lv), Tensor::zeros({3, 2})).same_values(mu));
}

TEST(Reparameterize, UnitVarianceAddsNoise) {
  const Tensor mu = Tensor::matrix(1, 3, {1, 2, 3});
  const Tensor eps = Tensor::matrix(1, 3, {0.5, -0.25, 2});
  const Tensor z = reparameterize(DiagGaussian(mu, Tensor::zeros({1, 3})), eps);
  EXPECT_EQ(z[0], 1.5);
  EXPECT_EQ(z[1], 1.75);
  EXPECT_EQ(z[2], 5.0);
}

TEST(Reparameterize, SampleMeanConverges) {
  const double mu = 0.7;
  const double log_var = std::log(0.25);
  const std::size_t draws = 100000;
  CounterRng rng(21, 3);
  std::vector<double> eps(draws);
  for (double& e : eps) {
    e = rng.normal();
  }
  const Tensor z = reparameterize(DiagGaussian(Tensor::full({draws, 1}, mu), Tensor::full({draws, 1}, log_var)),
                                  Tensor::matrix(draws, 1, eps));
  double mean = 0.0;
  for (double v : z.data()) {
    mean += v;
  }
  mean /= static_cast<double>(draws);
  const double se = 0.5 / std::sqrt(static_cast<double>(draws));
  EXPECT_LE(std::abs(mean - mu), 4 * se);
}

TEST(Reparameterize, NoGradientThroughNoise) {
  ad::Tape tape;
  const Tensor mu = tape.parameter(Tensor::zeros({1, 2}));
  const Tensor eps = tape.parameter(Tensor::matrix(1, 2, {1, 2}));
  const auto grads = tape.backward(ad::sum(reparameterize(DiagGaussian(mu, Tensor::zeros({1, 2})), eps)));
  EXPECT_EQ(grads.at(mu)[0], 1.0);
  EXPECT_EQ(grads.at(eps)[0], 0.0);
  EXPECT_EQ(grads.at(eps)[1], 0.0);
}

TEST(Distributions, ClosedFormsMatchFiniteDifferences) {
  CounterRng rng(31, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor(rng, {3, 5}, 0, 1);
    const Tensor mu = random_tensor(rng, {3, 5}, 0, 1);
    const Tensor lv = random_signed(rng, {3, 5}, 0, 2);
    const Tensor s2 = random_tensor(rng, {3}, 0.05, 2);
    const Tensor eps = random_signed(rng, {3, 5}, 0, 2);

    const auto kl = testing::gradcheck(
        [](const std::vector<Tensor>& in) { return ad::sum(kl_to_standard_normal(DiagGaussian(in[0], in[1]))); },
        {mu, lv});
    EXPECT_TRUE(kl.ok()) << "kl: " << kl.first_failure;

    const auto nll = testing::gradcheck(
        [&](const std::vector<Tensor>& in) { return ad::sum(gaussian_nll(x, in[0], in[1])); }, {mu, s2});
    EXPECT_TRUE(nll.ok()) << "nll: " << nll.first_failure;

    const auto opt = testing::gradcheck(
        [&](const std::vector<Tensor>& in) { return ad::sum(optimal_sigma_distortion(optimal_sigma2(x, in[0]), 5)); },
        {mu});
    EXPECT_TRUE(opt.ok()) << "optimal: " << opt.first_failure;

    const auto rep = testing::gradcheck(
        [&](const std::vector<Tensor>& in) {
          return ad::sum(ad::square(reparameterize(DiagGaussian(in[0], in[1]), eps)));
        },
        {mu, lv});
    EXPECT_TRUE(rep.ok()) << "reparameterize: " << rep.first_failure;
  }
}

TEST(Distributions, ClosedFormDistortionEqualsNllAtOptimum) {
  CounterRng rng(41, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(rng, {4, 9}, 0, 1);
    const Tensor mu = random_tensor(rng, {4, 9}, 0, 1);
    const Tensor s2 = optimal_sigma2(x, mu);
    const Tensor a = gaussian_nll(x, mu, s2);
    const Tensor b = optimal_sigma_distortion(s2, 9);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12 * std::max(1.0, std::abs(a[i])));
    }
  }
}

}  // namespace
}  // namespace bsvae
