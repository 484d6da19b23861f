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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bsvae/data.hpp"
#include "bsvae/model.hpp"
#include "bsvae/objectives.hpp"
#include "bsvae/training.hpp"

namespace bsvae {

// ---------------------------------------------------------------------------
// Rate-distortion sweeps

enum class SweepFamily {
  kConstantSigma,  // beta-VAE with constant decoder variance c (default 1/2)
  kBsVae,
};

const char* to_string(SweepFamily family);
SweepFamily parse_sweep_family(const std::string& name);

struct RdPoint {
  double beta = 1.0;
  Interpretation interpretation = Interpretation::kBsVae;
  double rate = 0.0;        // nats/sample
  double distortion = 0.0;  // nats/sample
  double elbo = 0.0;        // -(rate + distortion)
  std::uint64_t seed = 0;
  bool failed = false;      // training diverged; values are NaN

  bool operator==(const RdPoint&) const = default;
};

struct SweepConfig {
  std::vector<double> betas = {0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<SweepFamily> families = {SweepFamily::kConstantSigma, SweepFamily::kBsVae};
  ArchSpec arch;
  // Template for every point; objective mode, beta and seed are set per point.
  TrainConfig train;
  double const_c = 0.5;
  int eval_mc_samples = 16;
};

struct SweepModel {
  SweepFamily family = SweepFamily::kBsVae;
  double beta = 1.0;
  std::uint64_t seed = 0;
  TrainResult result;  // result.model is the trained model
};

struct SweepRun {
  std::vector<RdPoint> points;  // sorted by (beta, interpretation)
  std::vector<SweepModel> models;
};

// Seed used to initialize, train and evaluate one sweep point.
std::uint64_t sweep_point_seed(std::uint64_t base_seed, SweepFamily family, double beta);

// Trains one model per (family, beta) on `train` and evaluates rate and
// distortion on `test`. Constant-variance models yield three points
// (const_half, const_beta_half, optimal); BS-VAE models yield one. A diverged
// run produces failed points and the sweep continues.
SweepRun rd_sweep(const Dataset& train, const Dataset& test, const SweepConfig& cfg,
                  const std::function<void(const SweepModel&)>& on_model = {});

// CSV with a units comment line, then header
// "beta,interpretation,rate,distortion,elbo,seed".
std::string rd_points_to_csv(const std::vector<RdPoint>& points);
std::vector<RdPoint> rd_points_from_csv(const std::string& text);

// beta = 2 sigma2 + sigma2 log(2 pi sigma2) / kl. Requires kl > 0 and
// sigma2 >= kVarianceFloor.
double beta_sigma_relation(double sigma2, double kl);

// Spearman rank correlation, ties get their average rank.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// ---------------------------------------------------------------------------
// Image grids

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Binary PGM: "P5\n<w> <h>\n255\n" followed by the pixels.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

// Tiles equally sized images (values clipped to [0, 1]) into `grid_cols`
// columns, separated by a 1-pixel black border.
GrayImage tile_images(const std::vector<std::vector<double>>& images, std::pair<std::size_t, std::size_t> image_shape,
                      std::size_t grid_cols);

struct PriorSamples {
  ad::Tensor mu_x;  // n x data_dim
  GrayImage grid;
};

// Decodes n draws z ~ N(0, I).
PriorSamples sample_prior(const VaeModel& model, std::size_t n, std::uint64_t seed,
                          std::pair<std::size_t, std::size_t> image_shape);

struct Reconstruction {
  std::vector<std::size_t> indices;
  ad::Tensor originals;
  ad::Tensor reconstructions;  // decode(encode(x).mu)
  double mse = 0.0;
  GrayImage grid;  // each cell: original above reconstruction
};

Reconstruction reconstruct_grid(const VaeModel& model, const Dataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace bsvae
