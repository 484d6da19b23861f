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

#include "bsvae/error.hpp"
#include "bsvae/objectives.hpp"
#include "bsvae/training.hpp"
#include "gradcheck.hpp"
#include "reference_vae.hpp"

namespace bsvae {
namespace {

using ad::Tensor;
constexpr double kPi = std::numbers::pi;

ArchSpec toy_arch(std::uint32_t d = 5, std::uint32_t latent = 2) {
  ArchSpec arch;
  arch.data_dim = d;
  arch.latent_dim = latent;
  arch.hidden = {4};
  return arch;
}

struct Toy {
  VaeModel model;
  Tensor x;
  Tensor eps;
};

Toy make_toy(std::uint64_t seed, std::uint32_t d = 5, std::uint32_t latent = 2, std::size_t batch = 3, int mc = 1) {
  CounterRng rng(seed, 77);
  return {VaeModel::init(seed, toy_arch(d, latent)), testing::random_tensor(rng, {batch, d}, 0, 1),
          draw_noise(rng, batch, static_cast<std::size_t>(mc), latent)};
}

ObjectiveConfig cfg_of(ObjectiveMode mode, double beta, double c = 0.5, int mc = 1) {
  ObjectiveConfig cfg;
  cfg.mode = mode;
  cfg.beta = beta;
  cfg.c = c;
  cfg.mc_samples = mc;
  return cfg;
}

// Encoder all zero (q = prior), decoder output bias = x.
VaeModel perfect_prior_model(const ArchSpec& arch, const std::vector<double>& x) {
  auto params = VaeModel::zeros(arch).parameter_values();
  params.back() = Tensor::vector(x);
  return VaeModel::from_parameters(arch, params);
}

TEST(Objectives, ConstantSigmaLossVanishesAtPerfectPriorModel) {
  const std::vector<double> x = {0.1, 0.5, 0.9, 0.3, 0.7};
  const VaeModel m = perfect_prior_model(toy_arch(), x);
  CounterRng rng(1, 1);
  const auto terms = elbo_loss(m, Tensor::matrix(1, 5, x), cfg_of(ObjectiveMode::kConstantSigma, 1.0, 1.0 / (2 * kPi)),
                               draw_noise(rng, 1, 1, 2));
  EXPECT_NEAR(terms.loss.item(), 0.0, 1e-14);
  EXPECT_EQ(terms.rate[0], 0.0);
}

TEST(Objectives, BetaZeroIsPureDistortion) {
  const Toy t = make_toy(3);
  const auto terms = elbo_loss(t.model, t.x, cfg_of(ObjectiveMode::kConstantSigma, 0.0), t.eps);
  double mean = 0.0;
  for (double d : terms.distortion) mean += d / 3.0;
  EXPECT_NEAR(terms.loss.item(), mean, 1e-12);
  EXPECT_GT(terms.rate[0], 0.0);
}

TEST(Objectives, LossRecomposesFromParts) {
  for (ObjectiveMode mode : {ObjectiveMode::kConstantSigma, ObjectiveMode::kOptimalSigma, ObjectiveMode::kBsVae}) {
    for (double beta : {0.1, 1.0, 7.0}) {
      const Toy t = make_toy(11, 6, 3, 4, 2);
      const auto terms = compute_objective(t.model, t.x, cfg_of(mode, beta, 0.5, 2), t.eps);
      double recomposed = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        recomposed += (terms.distortion[i] + beta * terms.rate[i]) / 4.0;
        EXPECT_GE(terms.rate[i], -1e-12);
      }
      EXPECT_NEAR(terms.loss.item(), recomposed, 1e-12);
    }
  }
}

TEST(Objectives, MatchesPlainLoopReference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Toy t = make_toy(seed, 7, 3, 4, 3);
    const auto pass = testing::reference_pass(t.model, t.x, t.eps);
    const auto d_const = testing::reference_distortion(pass, 0.3);
    const auto d_opt = testing::reference_distortion(pass, -1.0);
    const auto c = elbo_loss(t.model, t.x, cfg_of(ObjectiveMode::kConstantSigma, 2.0, 0.3, 3), t.eps);
    const auto o = optimal_sigma_loss(t.model, t.x, cfg_of(ObjectiveMode::kOptimalSigma, 2.0, 0.5, 3), t.eps);
    const auto b = bs_vae_loss(t.model, t.x, cfg_of(ObjectiveMode::kBsVae, 2.0, 0.5, 3), t.eps);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(c.rate[i], pass.kl[i], 1e-12);
      EXPECT_NEAR(c.distortion[i], d_const[i], 1e-11);
      EXPECT_NEAR(o.distortion[i], d_opt[i], 1e-11);
      EXPECT_NEAR(b.distortion[i], d_opt[i], 1e-11);
    }
  }
}

TEST(Objectives, BsVaeEqualsOptimalSigmaElboAtBetaOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Toy t = make_toy(seed, 8, 2, 3, 1);
    const auto bs = bs_vae_loss(t.model, t.x, cfg_of(ObjectiveMode::kBsVae, 1.0), t.eps);
    const auto opt = optimal_sigma_loss(t.model, t.x, cfg_of(ObjectiveMode::kOptimalSigma, 1.0), t.eps);
    EXPECT_NEAR(bs.loss.item(), opt.loss.item(), 1e-12);
  }
}

TEST(Objectives, BsVaeDistortionIsHalfDimAtUnitLogTerm) {
  // Residual of constant magnitude sqrt(1/(2 pi)) gives MSE = 1/(2 pi).
  const std::size_t d = 5;
  const double r = std::sqrt(1.0 / (2 * kPi));
  const std::vector<double> mu_x = {0.2, 0.4, 0.1, 0.6, 0.3};
  std::vector<double> x = mu_x;
  for (std::size_t i = 0; i < d; ++i) x[i] += (i % 2 == 0 ? r : -r);
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  ASSERT_NEAR(x[0] - mu_x[0], r, 1e-15);
  const VaeModel m = perfect_prior_model(toy_arch(), mu_x);
  CounterRng rng(2, 2);
  const auto terms = bs_vae_loss(m, Tensor::matrix(1, d, x), cfg_of(ObjectiveMode::kBsVae, 1.0),
                                 draw_noise(rng, 1, 1, 2));
  EXPECT_NEAR(terms.distortion[0], 2.5, 1e-12);
  EXPECT_EQ(terms.rate[0], 0.0);
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
  const ArchSpec arch = toy_arch(5, 2);
  for (ObjectiveMode mode : {ObjectiveMode::kConstantSigma, ObjectiveMode::kOptimalSigma, ObjectiveMode::kBsVae}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Toy t = make_toy(200 + trial, 5, 2, 2, 2);
      const ObjectiveConfig cfg = cfg_of(mode, 0.5 + trial * 0.25, 0.5, 2);
      const testing::ScalarFn f = [&](const std::vector<Tensor>& params) {
        return compute_objective(VaeModel::from_parameters(arch, params), t.x, cfg, t.eps).loss;
      };
      const auto check = testing::gradcheck(f, t.model.parameter_values());
      EXPECT_TRUE(check.ok()) << to_string(mode) << " trial " << trial << ": " << check.first_failure;
    }
  }
}

TEST(Objectives, ObjectiveGradientsAgreeWithTape) {
  const Toy t = make_toy(5);
  const ObjectiveConfig cfg = cfg_of(ObjectiveMode::kBsVae, 1.0);
  const auto pg = objective_gradients(t.model, t.x, cfg, t.eps);
  EXPECT_EQ(pg.grads.size(), t.model.parameter_values().size());
  EXPECT_EQ(pg.loss, compute_objective(t.model, t.x, cfg, t.eps).loss.item());
}

TEST(Objectives, StopGradientChangesGradientOnly) {
  const Toy t = make_toy(6);
  ObjectiveConfig cfg = cfg_of(ObjectiveMode::kBsVae, 1.0);
  const auto full = objective_gradients(t.model, t.x, cfg, t.eps);
  cfg.stop_sigma_gradient = true;
  const auto stopped = objective_gradients(t.model, t.x, cfg, t.eps);
  EXPECT_NEAR(full.loss, stopped.loss, 1e-12);
  // d/dmu of the stationary value matches the frozen-variance gradient.
  for (std::size_t p = 0; p < full.grads.size(); ++p) {
    for (std::size_t i = 0; i < full.grads[p].size(); ++i) {
      EXPECT_NEAR(full.grads[p][i], stopped.grads[p][i], 1e-10 * (1 + std::abs(full.grads[p][i])));
    }
  }
}

TEST(Objectives, ModeMismatchRejected) {
  const Toy t = make_toy(1);
  EXPECT_THROW(elbo_loss(t.model, t.x, cfg_of(ObjectiveMode::kBsVae, 1.0), t.eps), ConfigError);
  EXPECT_THROW(bs_vae_loss(t.model, t.x, cfg_of(ObjectiveMode::kConstantSigma, 1.0), t.eps), ConfigError);
  EXPECT_THROW(compute_objective(t.model, t.x, cfg_of(ObjectiveMode::kBsVae, 1.0, 0.5, 2), t.eps), ShapeError);
  EXPECT_THROW(compute_objective(t.model, t.x, cfg_of(ObjectiveMode::kBsVae, -1.0), t.eps), ConfigError);
  EXPECT_THROW(compute_objective(t.model, t.x, cfg_of(ObjectiveMode::kConstantSigma, 1.0, 0.0), t.eps), ConfigError);
}

TEST(Objectives, ParseNames) {
  EXPECT_EQ(parse_objective_mode("bsvae"), ObjectiveMode::kBsVae);
  EXPECT_EQ(parse_objective_mode("const"), ObjectiveMode::kConstantSigma);
  EXPECT_EQ(parse_objective_mode("optimal"), ObjectiveMode::kOptimalSigma);
  EXPECT_THROW(parse_objective_mode("vae"), ConfigError);
  EXPECT_EQ(parse_interpretation("half"), Interpretation::kConstHalf);
  EXPECT_EQ(parse_interpretation("betahalf"), Interpretation::kConstBetaHalf);
  EXPECT_STREQ(to_string(Interpretation::kConstBetaHalf), "const_beta_half");
}

TEST(Equivalence, BetaOneIsExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Toy t = make_toy(seed, 16, 4, 4);
    EXPECT_LE(check_equivalence(t.model, t.x, 1.0, 0.5, t.eps), 1e-12);
  }
}

TEST(Equivalence, ProportionalGradientsAcrossBeta) {
  for (double beta : {0.1, 10.0}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Toy t = make_toy(1000 + seed, 16, 4, 4);
      EXPECT_LE(check_equivalence(t.model, t.x, beta, 0.5, t.eps), 1e-9) << "beta " << beta << " seed " << seed;
    }
  }
}

TEST(Equivalence, HoldsOverBetaAndVarianceRange) {
  for (double beta : {0.01, 0.3, 3.0, 100.0}) {
    for (double c : {0.5, 1.0}) {
      const Toy t = make_toy(7, 16, 4, 4, 2);
      EXPECT_LE(check_equivalence(t.model, t.x, beta, c, t.eps), 1e-9);
    }
  }
}

TEST(Equivalence, FailsAgainstOptimalVarianceObjective) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Toy t = make_toy(seed, 16, 4, 4);
    EXPECT_GT(check_equivalence(t.model, t.x, 10.0, 0.5, t.eps, ObjectiveMode::kBsVae), 1e-2);
  }
}

Dataset toy_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  CounterRng rng(seed, 5);
  std::vector<double> v(n * d);
  for (double& e : v) e = rng.uniform();
  return Dataset(n, d, std::move(v), Split::kTest, "toy");
}

TEST(EvaluateElbo, PerfectPriorModelHitsVarianceFloor) {
  const std::vector<double> x = {0.1, 0.5, 0.9, 0.3, 0.7};
  const VaeModel m = perfect_prior_model(toy_arch(), x);
  const Dataset ds(2, 5, {0.1, 0.5, 0.9, 0.3, 0.7, 0.1, 0.5, 0.9, 0.3, 0.7}, Split::kTest, "toy");
  const auto est = evaluate_elbo(m, ds, 1.0, {Interpretation::kOptimal}, 4, 1);
  ASSERT_EQ(est.size(), 1u);
  EXPECT_EQ(est[0].rate, 0.0);
  EXPECT_NEAR(est[0].distortion, 2.5 * (std::log(2 * kPi * 1e-6) + 1.0), 1e-12);
  EXPECT_EQ(est[0].mc_samples, 4);
  EXPECT_EQ(est[0].samples, 2u);
}

TEST(EvaluateElbo, VarianceSwapMatchesClosedForm) {
  const double beta = 10.0;
  const Dataset ds = toy_dataset(40, 6, 3);
  const VaeModel m = VaeModel::init(4, toy_arch(6, 2));
  const auto est = evaluate_elbo(m, ds, beta, {Interpretation::kConstHalf, Interpretation::kConstBetaHalf}, 1, 9);
  // Recover the mean squared residual from the sigma^2 = 1/2 distortion.
  const double sq = est[0].distortion - 3.0 * std::log(kPi);
  const double expected = sq * (1.0 - 1.0 / beta) - 3.0 * std::log(beta);
  EXPECT_NEAR(est[1].elbo - est[0].elbo, expected, 1e-10);
}

TEST(EvaluateElbo, InterpretationsMatchReference) {
  const Dataset ds = toy_dataset(7, 5, 8);
  const VaeModel m = VaeModel::init(2, toy_arch());
  const double beta = 4.0;
  const auto est = evaluate_elbo(
      m, ds, beta, {Interpretation::kConstHalf, Interpretation::kConstBetaHalf, Interpretation::kOptimal}, 3, 21, 3);
  CounterRng rng(21, Stream::kEval);
  double rate = 0.0, half = 0.0, bhalf = 0.0, opt = 0.0;
  for (std::size_t begin = 0; begin < 7; begin += 3) {
    const std::size_t end = std::min<std::size_t>(7, begin + 3);
    const Tensor eps = draw_noise(rng, end - begin, 3, 2);
    const auto pass = testing::reference_pass(m, ds.batch(begin, end), eps);
    const auto dh = testing::reference_distortion(pass, 0.5);
    const auto db = testing::reference_distortion(pass, beta / 2);
    const auto dopt = testing::reference_distortion(pass, -1.0);
    for (std::size_t i = 0; i < pass.kl.size(); ++i) {
      rate += pass.kl[i] / 7;
      half += dh[i] / 7;
      bhalf += db[i] / 7;
      opt += dopt[i] / 7;
    }
  }
  EXPECT_NEAR(est[0].rate, rate, 1e-12);
  EXPECT_NEAR(est[0].distortion, half, 1e-10);
  EXPECT_NEAR(est[1].distortion, bhalf, 1e-10);
  EXPECT_NEAR(est[2].distortion, opt, 1e-10);
  EXPECT_NEAR(est[2].elbo, -(rate + opt), 1e-10);
}

TEST(EvaluateElbo, McSampleCountsAgreeWithinStandardError) {
  const auto blobs = synthetic_blobs(400, 8, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.seed = 5;
  cfg.optimizer.learning_rate = 5e-3;
  const ArchSpec arch = toy_arch(8, 2);
  const auto trained = train(VaeModel::init(5, arch), blobs, cfg);
  ASSERT_FALSE(trained.diverged);
  const auto one = evaluate_elbo(trained.model, blobs, 1.0, {Interpretation::kBsVae}, 1, 77);
  const auto many = evaluate_elbo(trained.model, blobs, 1.0, {Interpretation::kBsVae}, 16, 78);
  const double se = std::hypot(one[0].elbo_std_error, many[0].elbo_std_error);
  EXPECT_LT(std::abs(one[0].elbo - many[0].elbo), 3.0 * se);
  EXPECT_EQ(one[0].rate, many[0].rate);
}

TEST(EvaluateElbo, DefaultInterpretations) {
  EXPECT_EQ(default_interpretations(cfg_of(ObjectiveMode::kConstantSigma, 1.0)).size(), 3u);
  EXPECT_EQ(default_interpretations(cfg_of(ObjectiveMode::kBsVae, 1.0)),
            std::vector<Interpretation>{Interpretation::kBsVae});
}

TEST(EvaluateElbo, RejectsBadArguments) {
  const VaeModel m = VaeModel::init(1, toy_arch());
  const Dataset ds = toy_dataset(3, 5, 1);
  EXPECT_THROW(evaluate_elbo(m, ds, 1.0, {Interpretation::kOptimal}, 0, 1), ConfigError);
  EXPECT_THROW(evaluate_elbo(m, ds.select({}, Split::kTest), 1.0, {Interpretation::kOptimal}, 1, 1), ConfigError);
  EXPECT_THROW(evaluate_elbo(m, ds, 1.0, {}, 1, 1), ConfigError);
}

TEST(EvaluateElbo, DeterministicInSeed) {
  const VaeModel m = VaeModel::init(1, toy_arch());
  const Dataset ds = toy_dataset(10, 5, 2);
  const auto a = evaluate_elbo(m, ds, 1.0, {Interpretation::kOptimal}, 4, 3);
  const auto b = evaluate_elbo(m, ds, 1.0, {Interpretation::kOptimal}, 4, 3);
  EXPECT_EQ(a[0].elbo, b[0].elbo);
}

}  // namespace
}  // namespace bsvae
