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

// bsvae command line: train, rd-sweep, check-equivalence, sample,
// reconstruct, eval.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsvae/analysis.hpp"
#include "bsvae/checksum.hpp"
#include "bsvae/data.hpp"
#include "bsvae/error.hpp"
#include "bsvae/model.hpp"
#include "bsvae/objectives.hpp"
#include "bsvae/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace bsvae {
namespace {

constexpr const char* kVersion = "1.0.0";

struct Options {
  // data
  std::string dataset = "mnist";
  std::string data_dir = "data/mnist-subset";
  std::size_t subset_n = 0;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  std::size_t blobs_n = 2000;
  std::size_t blobs_dim = 32;
  std::size_t blobs_modes = 4;
  std::uint64_t blobs_seed = 0;

  // model and training
  std::uint32_t latent_dim = 16;
  std::vector<std::uint32_t> hidden = {256, 128};
  int epochs = 50;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::string mode = "bsvae";
  std::vector<double> betas;
  double const_c = 0.5;
  int mc_samples = 0;
  bool stop_sigma_gradient = false;
  std::uint64_t seed = 0;
  bool record_wall_time = false;

  // outputs and evaluation
  std::string out_dir;
  std::string checkpoint;
  std::vector<std::string> interpretations;
  std::vector<std::string> families = {"const", "bsvae"};
  std::string beta_grid = "default";
  bool save_models = false;
  std::size_t n_images = 64;
  int seeds = 20;
  std::uint32_t data_dim = 16;
  std::size_t batch_rows = 8;
};

struct Splits {
  Dataset train;
  Dataset test;
};

Splits load_data(const Options& o) {
  Dataset full = [&] {
    if (o.dataset == "mnist") {
      return load_idx(fs::path(o.data_dir) / "train-images-idx3-ubyte");
    }
    if (o.dataset == "blobs") {
      return synthetic_blobs(o.blobs_n, o.blobs_dim, o.blobs_modes, o.blobs_seed);
    }
    throw ConfigError("unknown dataset '" + o.dataset + "' (expected mnist or blobs)");
  }();
  if (o.subset_n > 0) {
    full = full.head(o.subset_n);
  }
  auto [train, test] = split_and_shuffle(full, o.test_fraction, o.split_seed);
  return {std::move(train), std::move(test)};
}

ArchSpec arch_of(const Options& o, std::size_t data_dim) {
  ArchSpec arch;
  arch.data_dim = static_cast<std::uint32_t>(data_dim);
  arch.latent_dim = o.latent_dim;
  arch.hidden = o.hidden;
  arch.validate();
  return arch;
}

double single_beta(const Options& o) {
  if (o.betas.empty()) return 1.0;
  if (o.betas.size() != 1) throw ConfigError("this command takes a single --beta value");
  return o.betas.front();
}

ObjectiveConfig objective_of(const Options& o, int default_mc) {
  ObjectiveConfig cfg;
  cfg.mode = parse_objective_mode(o.mode);
  cfg.beta = single_beta(o);
  cfg.c = o.const_c;
  cfg.mc_samples = o.mc_samples > 0 ? o.mc_samples : default_mc;
  cfg.stop_sigma_gradient = o.stop_sigma_gradient;
  cfg.validate();
  return cfg;
}

TrainConfig train_config_of(const Options& o) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.optimizer.learning_rate = o.learning_rate;
  cfg.optimizer.weight_decay = o.weight_decay;
  cfg.seed = o.seed;
  cfg.objective = objective_of(o, 1);
  cfg.validate();
  return cfg;
}

std::pair<std::size_t, std::size_t> image_shape_for(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side == dim) return {side, side};
  return {1, dim};
}

fs::path prepare_out_dir(const Options& o) {
  if (o.out_dir.empty()) throw ConfigError("--out-dir is required");
  fs::create_directories(o.out_dir);
  return o.out_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

json data_json(const Options& o, const Splits& s) {
  json j;
  j["dataset"] = o.dataset;
  if (o.dataset == "mnist") {
    j["data_dir"] = o.data_dir;
  } else {
    j["blobs_n"] = o.blobs_n;
    j["blobs_dim"] = o.blobs_dim;
    j["blobs_modes"] = o.blobs_modes;
    j["blobs_seed"] = o.blobs_seed;
  }
  j["subset_n"] = o.subset_n;
  j["test_fraction"] = o.test_fraction;
  j["split_seed"] = o.split_seed;
  j["train_size"] = s.train.size();
  j["test_size"] = s.test.size();
  j["dim"] = s.train.dim();
  return j;
}

json arch_json(const ArchSpec& a) {
  return {{"data_dim", a.data_dim}, {"latent_dim", a.latent_dim}, {"hidden", a.hidden}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.optimizer.learning_rate},
          {"weight_decay", t.optimizer.weight_decay},
          {"adam_beta1", t.optimizer.beta1},
          {"adam_beta2", t.optimizer.beta2},
          {"adam_eps", t.optimizer.eps},
          {"seed", t.seed},
          {"objective",
           {{"mode", to_string(t.objective.mode)},
            {"beta", t.objective.beta},
            {"c", t.objective.c},
            {"mc_samples", t.objective.mc_samples},
            {"stop_sigma_gradient", t.objective.stop_sigma_gradient}}}};
}

void write_manifest(const fs::path& dir, const std::string& command, json config,
                    const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "bsvae";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = std::move(config);
  json sums = json::object();
  for (const auto& name : outputs) {
    sums[name] = sha256_file(dir / name);
  }
  m["outputs"] = std::move(sums);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<Interpretation> interpretations_of(const Options& o, const ObjectiveConfig& cfg) {
  if (o.interpretations.empty()) return default_interpretations(cfg);
  std::vector<Interpretation> out;
  for (const auto& name : o.interpretations) {
    if (name == "all") {
      return {Interpretation::kConstHalf, Interpretation::kConstBetaHalf, Interpretation::kOptimal};
    }
    out.push_back(parse_interpretation(name));
  }
  return out;
}

VaeModel load_model(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw ConfigError("checkpoint not found: " + o.checkpoint);
  return load_checkpoint(o.checkpoint);
}

// ---------------------------------------------------------------------------

int run_train(const Options& o) {
  const TrainConfig cfg = train_config_of(o);
  const Splits data = load_data(o);
  const fs::path dir = prepare_out_dir(o);
  const ArchSpec arch = arch_of(o, data.train.dim());
  const auto result = train(VaeModel::init(o.seed, arch), data.train, cfg, {o.record_wall_time});

  write_trace_csv(result.trace, dir / "trace.csv");
  save_checkpoint(result.model, dir / "model.bsv");
  json config = {{"data", data_json(o, data)}, {"arch", arch_json(arch)}, {"train", train_json(cfg)},
                 {"record_wall_time", o.record_wall_time}, {"diverged", result.diverged}};
  if (result.diverged) config["failure"] = result.failure;
  write_manifest(dir, "train", std::move(config), {"trace.csv", "model.bsv"});

  if (result.diverged) {
    std::cerr << "bsvae: training diverged: " << result.failure << "\n";
    return 1;
  }
  const auto& last = result.trace.records;
  if (!last.empty()) {
    std::printf("epoch %d loss %.6f rate %.6f distortion %.6f\n", last.back().epoch, last.back().loss,
                last.back().rate, last.back().distortion);
  }
  return 0;
}

std::vector<double> sweep_betas(const Options& o) {
  if (!o.betas.empty()) return o.betas;
  if (o.beta_grid == "full") return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};
  if (o.beta_grid == "default") return SweepConfig{}.betas;
  throw ConfigError("unknown --beta-grid '" + o.beta_grid + "' (expected default or full)");
}

int run_rd_sweep(const Options& o) {
  const Splits data = load_data(o);
  const fs::path dir = prepare_out_dir(o);
  SweepConfig cfg;
  cfg.betas = sweep_betas(o);
  cfg.families.clear();
  for (const auto& f : o.families) cfg.families.push_back(parse_sweep_family(f));
  cfg.arch = arch_of(o, data.train.dim());
  Options template_opts = o;
  template_opts.betas = {1.0};
  cfg.train = train_config_of(template_opts);
  cfg.const_c = o.const_c;
  cfg.eval_mc_samples = o.mc_samples > 0 ? o.mc_samples : 16;

  std::vector<std::string> outputs = {"rd.csv"};
  json models = json::array();
  const auto on_model = [&](const SweepModel& m) {
    std::printf("%s beta=%s %s\n", to_string(m.family), format_double(m.beta).c_str(),
                m.result.diverged ? "diverged" : "done");
    std::fflush(stdout);
    json entry = {{"family", to_string(m.family)}, {"beta", m.beta}, {"seed", m.seed},
                  {"diverged", m.result.diverged}};
    if (o.save_models) {
      const std::string name = std::string("model_") + to_string(m.family) + "_" + format_double(m.beta) + ".bsv";
      save_checkpoint(m.result.model, dir / name);
      outputs.push_back(name);
      entry["checkpoint"] = name;
    }
    models.push_back(std::move(entry));
  };
  const SweepRun run = rd_sweep(data.train, data.test, cfg, on_model);
  write_text(dir / "rd.csv", rd_points_to_csv(run.points));

  std::vector<std::string> families;
  for (auto f : cfg.families) families.emplace_back(to_string(f));
  json config = {{"data", data_json(o, data)},
                 {"arch", arch_json(cfg.arch)},
                 {"train", train_json(cfg.train)},
                 {"betas", cfg.betas},
                 {"families", families},
                 {"const_c", cfg.const_c},
                 {"eval_mc_samples", cfg.eval_mc_samples},
                 {"models", models}};
  write_manifest(dir, "rd-sweep", std::move(config), outputs);
  return 0;
}

int run_check_equivalence(const Options& o) {
  if (o.seeds < 1) throw ConfigError("--seeds must be at least 1");
  const std::vector<double> betas = o.betas.empty() ? std::vector<double>{0.1, 1.0, 10.0} : o.betas;
  for (double b : betas) {
    if (!(b > 0.0)) throw ConfigError("beta must be positive");
  }
  if (!(o.const_c > 0.0)) throw ConfigError("--const-c must be positive");
  ArchSpec arch;
  arch.data_dim = o.data_dim;
  arch.latent_dim = o.latent_dim;
  arch.hidden = o.hidden;
  arch.validate();
  const int mc = o.mc_samples > 0 ? o.mc_samples : 1;

  double worst = 0.0;
  for (int s = 0; s < o.seeds; ++s) {
    const std::uint64_t seed = derive_seed(o.seed, static_cast<std::uint64_t>(s));
    const VaeModel model = VaeModel::init(seed, arch);
    CounterRng rng(seed, Stream::kData);
    std::vector<double> x(o.batch_rows * arch.data_dim);
    for (double& v : x) v = rng.uniform();
    const ad::Tensor xt = ad::Tensor::matrix(o.batch_rows, arch.data_dim, std::move(x));
    CounterRng noise(seed, Stream::kNoise);
    const ad::Tensor eps = draw_noise(noise, o.batch_rows, static_cast<std::size_t>(mc), arch.latent_dim);
    for (double beta : betas) {
      worst = std::max(worst, check_equivalence(model, xt, beta, o.const_c, eps));
    }
  }
  const bool pass = worst <= 1e-9;
  std::printf("max discrepancy %.3e over %d models x %zu betas\n%s\n", worst, o.seeds, betas.size(),
              pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

int run_sample(const Options& o) {
  const VaeModel model = load_model(o);
  const fs::path dir = prepare_out_dir(o);
  if (o.n_images == 0) throw ConfigError("--n must be at least 1");
  const auto shape = image_shape_for(model.arch().data_dim);
  const PriorSamples s = sample_prior(model, o.n_images, o.seed, shape);
  write_pgm(s.grid, dir / "samples.pgm");
  write_manifest(dir, "sample",
                 {{"checkpoint", o.checkpoint}, {"arch", arch_json(model.arch())}, {"n", o.n_images},
                  {"seed", o.seed}},
                 {"samples.pgm"});
  std::printf("wrote %zu samples (%zux%zu grid)\n", o.n_images, s.grid.width, s.grid.height);
  return 0;
}

int run_reconstruct(const Options& o) {
  const VaeModel model = load_model(o);
  const Splits data = load_data(o);
  const fs::path dir = prepare_out_dir(o);
  if (data.test.dim() != model.arch().data_dim) {
    throw ConfigError("checkpoint expects dim " + std::to_string(model.arch().data_dim) + ", data has " +
                      std::to_string(data.test.dim()));
  }
  const Reconstruction r = reconstruct_grid(model, data.test, std::min(o.n_images, data.test.size()), o.seed);
  write_pgm(r.grid, dir / "reconstructions.pgm");
  write_manifest(dir, "reconstruct",
                 {{"checkpoint", o.checkpoint}, {"data", data_json(o, data)}, {"n", r.indices.size()},
                  {"seed", o.seed}, {"mse", r.mse}},
                 {"reconstructions.pgm"});
  std::printf("reconstruction mse %.6g over %zu test images\n", r.mse, r.indices.size());
  return 0;
}

int run_eval(const Options& o) {
  const VaeModel model = load_model(o);
  const ObjectiveConfig cfg = objective_of(o, 16);
  const Splits data = load_data(o);
  if (data.test.dim() != model.arch().data_dim) {
    throw ConfigError("checkpoint expects dim " + std::to_string(model.arch().data_dim) + ", data has " +
                      std::to_string(data.test.dim()));
  }
  const auto interps = interpretations_of(o, cfg);
  const auto est = evaluate_elbo(model, data.test, cfg.beta, interps, cfg.mc_samples, o.seed);

  std::ostringstream csv;
  csv << "interpretation,rate,distortion,elbo,elbo_std_error,mc_samples,samples\n";
  std::map<Interpretation, double> elbo;
  for (const auto& e : est) {
    std::printf("%-16s elbo %12.4f  rate %10.4f  distortion %12.4f  (se %.4f, mc %d, n %zu)\n",
                to_string(e.interpretation), e.elbo, e.rate, e.distortion, e.elbo_std_error, e.mc_samples,
                e.samples);
    csv << to_string(e.interpretation) << ',' << format_double(e.rate) << ',' << format_double(e.distortion) << ','
        << format_double(e.elbo) << ',' << format_double(e.elbo_std_error) << ',' << e.mc_samples << ','
        << e.samples << '\n';
    elbo[e.interpretation] = e.elbo;
  }

  int status = 0;
  if (elbo.count(Interpretation::kConstHalf) && elbo.count(Interpretation::kConstBetaHalf)) {
    // sigma^2 = 1/2 distortion is sum r^2 + (D/2) log pi.
    const auto& h = *std::find_if(est.begin(), est.end(),
                                  [](const auto& e) { return e.interpretation == Interpretation::kConstHalf; });
    const double dim = model.arch().data_dim;
    const double sq = h.distortion - 0.5 * dim * std::log(std::numbers::pi);
    const double expected = sq * (1.0 - 1.0 / cfg.beta) - 0.5 * dim * std::log(cfg.beta);
    const double measured = elbo[Interpretation::kConstBetaHalf] - elbo[Interpretation::kConstHalf];
    const bool ok = std::abs(measured - expected) <= 1e-9 * std::max(1.0, std::abs(expected));
    std::printf("variance swap: measured %.10g expected %.10g %s\n", measured, expected, ok ? "PASS" : "FAIL");
    status = ok ? 0 : 1;
  }
  if (elbo.count(Interpretation::kOptimal)) {
    for (auto other : {Interpretation::kConstHalf, Interpretation::kConstBetaHalf}) {
      if (elbo.count(other) && elbo[Interpretation::kOptimal] < elbo[other] - 1e-9) {
        std::printf("dominance violated: optimal below %s\n", to_string(other));
        status = 1;
      }
    }
  }

  if (!o.out_dir.empty()) {
    const fs::path dir = prepare_out_dir(o);
    write_text(dir / "eval.csv", csv.str());
    std::vector<std::string> names;
    for (auto i : interps) names.emplace_back(to_string(i));
    write_manifest(dir, "eval",
                   {{"checkpoint", o.checkpoint}, {"data", data_json(o, data)}, {"beta", cfg.beta},
                    {"mc_samples", cfg.mc_samples}, {"seed", o.seed}, {"interpretations", names}},
                   {"eval.csv"});
  }
  return status;
}

// ---------------------------------------------------------------------------

void add_data_flags(CLI::App* app, Options& o) {
  app->add_option("--dataset", o.dataset, "mnist or blobs")->check(CLI::IsMember({"mnist", "blobs"}));
  app->add_option("--data-dir", o.data_dir, "directory holding train-images-idx3-ubyte");
  app->add_option("--subset-n", o.subset_n, "use only the first N images (0 = all)");
  app->add_option("--test-fraction", o.test_fraction, "fraction held out for evaluation");
  app->add_option("--split-seed", o.split_seed, "seed of the train/test split");
  app->add_option("--blobs-n", o.blobs_n, "synthetic blob sample count");
  app->add_option("--blobs-dim", o.blobs_dim, "synthetic blob dimension");
  app->add_option("--blobs-modes", o.blobs_modes, "synthetic blob mode count");
  app->add_option("--blobs-seed", o.blobs_seed, "synthetic blob seed");
}

void add_model_flags(CLI::App* app, Options& o) {
  app->add_option("--latent-dim", o.latent_dim, "latent dimension");
  app->add_option("--hidden", o.hidden, "hidden widths, comma separated")->delimiter(',');
}

void add_objective_flags(CLI::App* app, Options& o) {
  app->add_option("--mode", o.mode, "objective: const, optimal or bsvae")
      ->check(CLI::IsMember({"const", "optimal", "bsvae"}));
  app->add_option("--beta", o.betas, "KL weight (comma separated list for rd-sweep)")->delimiter(',');
  app->add_option("--const-c", o.const_c, "decoder variance of the constant-variance objective");
  app->add_option("--mc-samples", o.mc_samples, "reparameterization draws per sample");
  app->add_flag("--stop-sigma-gradient", o.stop_sigma_gradient, "treat the optimal variance as a constant");
}

void add_train_flags(CLI::App* app, Options& o) {
  app->add_option("--epochs", o.epochs, "training epochs");
  app->add_option("--batch-size", o.batch_size, "minibatch size");
  app->add_option("--lr", o.learning_rate, "AdamW learning rate");
  app->add_option("--weight-decay", o.weight_decay, "AdamW decoupled weight decay");
  app->add_flag("--record-wall-time", o.record_wall_time, "write per-epoch wall time into the trace");
}

int run(int argc, char** argv) {
  CLI::App app{"Beta-sigma VAE toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* train_cmd = app.add_subcommand("train", "train one model and write trace.csv and model.bsv");
  auto* sweep_cmd = app.add_subcommand("rd-sweep", "train across a beta grid and write rd.csv");
  auto* equiv_cmd = app.add_subcommand("check-equivalence", "check beta/variance gradient proportionality");
  auto* sample_cmd = app.add_subcommand("sample", "decode prior samples into samples.pgm");
  auto* recon_cmd = app.add_subcommand("reconstruct", "write test reconstructions to reconstructions.pgm");
  auto* eval_cmd = app.add_subcommand("eval", "test-set ELBO of a checkpoint under several interpretations");

  for (auto* cmd : {train_cmd, sweep_cmd, sample_cmd, recon_cmd, eval_cmd}) {
    cmd->add_option("--out-dir", o.out_dir, "output directory");
  }
  for (auto* cmd : app.get_subcommands({})) {
    cmd->add_option("--seed", o.seed, "base seed");
  }
  for (auto* cmd : {train_cmd, sweep_cmd, recon_cmd, eval_cmd}) add_data_flags(cmd, o);
  for (auto* cmd : {train_cmd, sweep_cmd, equiv_cmd}) add_model_flags(cmd, o);
  for (auto* cmd : {train_cmd, sweep_cmd, equiv_cmd, eval_cmd}) add_objective_flags(cmd, o);
  for (auto* cmd : {train_cmd, sweep_cmd}) add_train_flags(cmd, o);

  sweep_cmd->add_option("--families", o.families, "const and/or bsvae")->delimiter(',');
  sweep_cmd->add_option("--beta-grid", o.beta_grid, "default (0.01..100) or full (1e-4..1e3)");
  sweep_cmd->add_flag("--save-models", o.save_models, "write one checkpoint per trained model");

  equiv_cmd->add_option("--seeds", o.seeds, "number of random toy models");
  equiv_cmd->add_option("--data-dim", o.data_dim, "toy data dimension");
  equiv_cmd->add_option("--batch-rows", o.batch_rows, "toy batch size");

  for (auto* cmd : {sample_cmd, recon_cmd, eval_cmd}) {
    cmd->add_option("--checkpoint", o.checkpoint, "model.bsv to load")->required();
  }
  sample_cmd->add_option("--n", o.n_images, "number of images");
  recon_cmd->add_option("--n", o.n_images, "number of images");
  eval_cmd->add_option("--interpretations", o.interpretations, "half, betahalf, optimal, bsvae or all")
      ->delimiter(',')
      ->check(CLI::IsMember({"half", "betahalf", "optimal", "bsvae", "all", "const_half", "const_beta_half"}));

  // Toy defaults for the equivalence check.
  equiv_cmd->preparse_callback([&](std::size_t) {
    o.latent_dim = 4;
    o.hidden = {32};
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "bsvae: error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train_cmd) return run_train(o);
    if (*sweep_cmd) return run_rd_sweep(o);
    if (*equiv_cmd) return run_check_equivalence(o);
    if (*sample_cmd) return run_sample(o);
    if (*recon_cmd) return run_reconstruct(o);
    if (*eval_cmd) return run_eval(o);
  } catch (const std::exception& e) {
    std::cerr << "bsvae: error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace
}  // namespace bsvae

int main(int argc, char** argv) { return bsvae::run(argc, argv); }
