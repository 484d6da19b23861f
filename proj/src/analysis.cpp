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

#include "bsvae/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bsvae/distributions.hpp"
#include "bsvae/error.hpp"
#include "bsvae/rng.hpp"

namespace bsvae {

using ad::Tensor;

namespace {

constexpr char kRdHeader[] = "beta,interpretation,rate,distortion,elbo,seed";
constexpr char kRdUnits[] = "# rate, distortion and elbo are in nats per sample";

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      r[order[k]] = avg;
    }
    i = j + 1;
  }
  return r;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const std::size_t cols = t.cols();
  const auto d = t.data();
  return {d.begin() + static_cast<std::ptrdiff_t>(r * cols), d.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
}

std::size_t grid_columns(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

}  // namespace

const char* to_string(SweepFamily family) {
  return family == SweepFamily::kConstantSigma ? "const" : "bsvae";
}

SweepFamily parse_sweep_family(const std::string& name) {
  if (name == "const") return SweepFamily::kConstantSigma;
  if (name == "bsvae") return SweepFamily::kBsVae;
  throw ConfigError("unknown sweep family '" + name + "' (expected const or bsvae)");
}

std::uint64_t sweep_point_seed(std::uint64_t base_seed, SweepFamily family, double beta) {
  const std::uint64_t family_tag = family == SweepFamily::kConstantSigma ? 0x11 : 0x22;
  return derive_seed(derive_seed(base_seed, static_cast<std::uint64_t>(Stream::kSweep) ^ family_tag),
                     std::bit_cast<std::uint64_t>(beta));
}

SweepRun rd_sweep(const Dataset& train_set, const Dataset& test_set, const SweepConfig& cfg,
                  const std::function<void(const SweepModel&)>& on_model) {
  if (cfg.betas.empty()) {
    throw ConfigError("beta grid is empty");
  }
  for (std::size_t i = 0; i < cfg.betas.size(); ++i) {
    if (!(cfg.betas[i] > 0.0) || (i > 0 && !(cfg.betas[i] > cfg.betas[i - 1]))) {
      throw ConfigError("beta grid must be positive and strictly increasing");
    }
  }
  if (cfg.families.empty()) {
    throw ConfigError("no model family selected");
  }
  cfg.arch.validate();

  SweepRun run;
  for (SweepFamily family : cfg.families) {
    for (double beta : cfg.betas) {
      const std::uint64_t seed = sweep_point_seed(cfg.train.seed, family, beta);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.objective.beta = beta;
      tc.objective.mode =
          family == SweepFamily::kConstantSigma ? ObjectiveMode::kConstantSigma : ObjectiveMode::kBsVae;
      tc.objective.c = cfg.const_c;

      const VaeModel init = VaeModel::init(seed, cfg.arch);
      TrainResult result = train(init, train_set, tc);
      const auto interpretations = default_interpretations(tc.objective);
      if (result.diverged) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (Interpretation it : interpretations) {
          run.points.push_back({beta, it, nan, nan, nan, seed, true});
        }
      } else {
        const auto estimates =
            evaluate_elbo(result.model, test_set, beta, interpretations, cfg.eval_mc_samples, derive_seed(seed, 0xE7A1));
        for (const ElboEstimate& e : estimates) {
          run.points.push_back({beta, e.interpretation, e.rate, e.distortion, e.elbo, seed, false});
        }
      }
      SweepModel sm{family, beta, seed, std::move(result)};
      if (on_model) {
        on_model(sm);
      }
      run.models.push_back(std::move(sm));
    }
  }
  std::stable_sort(run.points.begin(), run.points.end(), [](const RdPoint& a, const RdPoint& b) {
    if (a.beta != b.beta) return a.beta < b.beta;
    return static_cast<int>(a.interpretation) < static_cast<int>(b.interpretation);
  });
  return run;
}

std::string rd_points_to_csv(const std::vector<RdPoint>& points) {
  std::ostringstream os;
  os << kRdUnits << '\n' << kRdHeader << '\n';
  for (const RdPoint& p : points) {
    os << format_double(p.beta) << ',' << to_string(p.interpretation) << ',' << format_double(p.rate) << ','
       << format_double(p.distortion) << ',' << format_double(p.elbo) << ',' << p.seed << '\n';
  }
  return os.str();
}

std::vector<RdPoint> rd_points_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  bool header_seen = false;
  std::vector<RdPoint> points;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty() || line.front() == '#') {
      continue;
    }
    if (!header_seen) {
      if (line != kRdHeader) {
        throw ParseError("rd CSV header mismatch", line_offset);
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() != 6) {
      throw ParseError("rd CSV row needs 6 fields", line_offset);
    }
    try {
      RdPoint p;
      p.beta = std::stod(cells[0]);
      p.interpretation = parse_interpretation(cells[1]);
      p.rate = std::stod(cells[2]);
      p.distortion = std::stod(cells[3]);
      p.elbo = std::stod(cells[4]);
      p.seed = std::stoull(cells[5]);
      p.failed = std::isnan(p.elbo);
      points.push_back(p);
    } catch (const std::logic_error&) {
      throw ParseError("rd CSV row has an invalid field", line_offset);
    }
  }
  if (!header_seen) {
    throw ParseError("rd CSV has no header", offset);
  }
  return points;
}

double beta_sigma_relation(double sigma2, double kl) {
  if (!(kl > 0.0)) {
    throw DomainError("beta_sigma_relation: KL must be positive, got " + std::to_string(kl));
  }
  if (!(sigma2 >= kVarianceFloor)) {
    throw DomainError("beta_sigma_relation: sigma2 " + std::to_string(sigma2) + " below floor");
  }
  return 2.0 * sigma2 + sigma2 * std::log(2.0 * std::numbers::pi * sigma2) / kl;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw ConfigError("spearman needs two equally long series of at least 2 values");
  }
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) {
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw ShapeError("PGM pixel count does not match " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  }
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayImage tile_images(const std::vector<std::vector<double>>& images, std::pair<std::size_t, std::size_t> image_shape,
                      std::size_t grid_cols) {
  const auto [h, w] = image_shape;
  if (images.empty() || grid_cols == 0 || h * w == 0) {
    throw ConfigError("tile_images needs at least one image and a positive grid width");
  }
  const std::size_t grid_rows = (images.size() + grid_cols - 1) / grid_cols;
  GrayImage out;
  out.width = grid_cols * (w + 1) + 1;
  out.height = grid_rows * (h + 1) + 1;
  out.pixels.assign(out.width * out.height, 0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].size() != h * w) {
      throw ShapeError("tile_images: image " + std::to_string(k) + " has " + std::to_string(images[k].size()) +
                       " values, expected " + std::to_string(h * w));
    }
    const std::size_t top = (k / grid_cols) * (h + 1) + 1;
    const std::size_t left = (k % grid_cols) * (w + 1) + 1;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        out.pixels[(top + r) * out.width + left + c] = to_byte(images[k][r * w + c]);
      }
    }
  }
  return out;
}

PriorSamples sample_prior(const VaeModel& model, std::size_t n, std::uint64_t seed,
                          std::pair<std::size_t, std::size_t> image_shape) {
  if (n == 0) {
    throw ConfigError("sample_prior needs n >= 1");
  }
  if (image_shape.first * image_shape.second != model.arch().data_dim) {
    image_shape = {1, model.arch().data_dim};
  }
  const std::size_t latent = model.arch().latent_dim;
  CounterRng rng(seed, Stream::kSample);
  std::vector<double> z(n * latent);
  for (double& v : z) {
    v = rng.normal();
  }
  PriorSamples out;
  out.mu_x = decode(model.detached(), Tensor::matrix(n, latent, std::move(z)));
  std::vector<std::vector<double>> images;
  for (std::size_t i = 0; i < n; ++i) {
    images.push_back(row_of(out.mu_x, i));
  }
  out.grid = tile_images(images, image_shape, grid_columns(n));
  return out;
}

Reconstruction reconstruct_grid(const VaeModel& model, const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > dataset.size()) {
    throw ConfigError("reconstruct_grid: n must lie in [1, " + std::to_string(dataset.size()) + "]");
  }
  Reconstruction out;
  const auto order = shuffled_indices(dataset.size(), seed, 0);
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  out.originals = dataset.batch(out.indices);
  const VaeModel constant = model.detached();
  out.reconstructions = decode(constant, encode(constant, out.originals).mu);

  double sq = 0.0;
  for (std::size_t i = 0; i < out.originals.size(); ++i) {
    const double d = out.originals[i] - out.reconstructions[i];
    sq += d * d;
  }
  out.mse = sq / static_cast<double>(out.originals.size());

  // Each tile stacks the original above its reconstruction.
  const auto [h, w] = dataset.image_shape();
  std::vector<std::vector<double>> tiles;
  for (std::size_t i = 0; i < n; ++i) {
    auto tile = row_of(out.originals, i);
    const auto recon = row_of(out.reconstructions, i);
    tile.insert(tile.end(), recon.begin(), recon.end());
    tiles.push_back(std::move(tile));
  }
  out.grid = tile_images(tiles, {2 * h, w}, grid_columns(n));
  return out;
}

}  // namespace bsvae
