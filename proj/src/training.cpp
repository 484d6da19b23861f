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

#include "bsvae/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bsvae/error.hpp"
#include "bsvae/rng.hpp"

namespace bsvae {

void AdamWConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  optimizer.validate();
  objective.validate();
}

void adamw_step(std::span<const NamedParameter> params, std::span<const ad::Tensor> grads, AdamWState& state,
                const AdamWConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeError("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].value->shape() != grads[p].shape()) {
      throw ShapeError("adamw_step: gradient shape " + ad::to_string(grads[p].shape()) + " for " + params[p].name +
                       " of shape " + ad::to_string(params[p].value->shape()));
    }
    for (double g : grads[p].data()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradientError(params[p].name);
      }
    }
  }
  if (state.m.empty()) {
    for (const NamedParameter& p : params) {
      state.m.emplace_back(p.value->size(), 0.0);
      state.v.emplace_back(p.value->size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adamw_step: optimizer state does not match parameter list");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].value->mutable_data();
    const auto g = grads[p].data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != values.size()) {
      throw ShapeError("adamw_step: optimizer state size mismatch for " + params[p].name);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * values[i]);
    }
  }
}

TrainResult train(const VaeModel& model, const Dataset& dataset, const TrainConfig& cfg, TrainOptions options) {
  cfg.validate();
  if (dataset.dim() != model.arch().data_dim) {
    throw ShapeError("train: dataset dim " + std::to_string(dataset.dim()) + " vs model data_dim " +
                     std::to_string(model.arch().data_dim));
  }
  TrainResult result{model.detached(), {}, false, {}};
  AdamWState state;
  CounterRng noise(cfg.seed, Stream::kNoise);
  const std::size_t n = dataset.size();
  const std::size_t latent = model.arch().latent_dim;
  const auto mc = static_cast<std::size_t>(cfg.objective.mc_samples);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = shuffled_indices(n, cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    double rate_sum = 0.0;
    double distortion_sum = 0.0;

    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
      const ad::Tensor x = dataset.batch(idx);
      const ad::Tensor eps = draw_noise(noise, idx.size(), mc, latent);

      std::vector<ad::Tensor> grads;
      LossTerms terms;
      try {
        ad::Tape tape;
        VaeModel bound = result.model.bind(tape);
        terms = compute_objective(bound, x, cfg.objective, eps);
        const ad::Gradients g = tape.backward(terms.loss);
        for (const NamedParameter& p : bound.parameters()) {
          grads.push_back(g.at(*p.value));
        }
      } catch (const DomainError& e) {
        result.diverged = true;
        result.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
        return result;
      }
      const double loss = terms.loss.item();
      if (!std::isfinite(loss)) {
        result.diverged = true;
        result.failure = "epoch " + std::to_string(epoch) + ": non-finite loss";
        return result;
      }
      try {
        const auto params = result.model.parameters();
        adamw_step(params, grads, state, cfg.optimizer);
      } catch (const NonFiniteGradientError& e) {
        result.diverged = true;
        result.failure = "epoch " + std::to_string(epoch) + ": " + e.what();
        return result;
      }
      if (!result.model.all_finite()) {
        result.diverged = true;
        result.failure = "epoch " + std::to_string(epoch) + ": non-finite parameter after update";
        return result;
      }
      loss_sum += loss * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        rate_sum += terms.rate[i];
        distortion_sum += terms.distortion[i];
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = loss_sum / static_cast<double>(n);
    record.rate = rate_sum / static_cast<double>(n);
    record.distortion = distortion_sum / static_cast<double>(n);
    if (options.record_wall_time) {
      record.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    result.trace.records.push_back(record);
  }
  return result;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream os;
  os << "epoch,loss,rate,distortion,wall_ms\n";
  for (const EpochRecord& r : trace.records) {
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.rate) << ','
       << format_double(r.distortion) << ',' << format_double(r.wall_ms) << '\n';
  }
  return os.str();
}

TrainTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != "epoch,loss,rate,distortion,wall_ms") {
    throw ParseError("trace CSV header mismatch", 0);
  }
  offset += line.size() + 1;
  TrainTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() != 5) {
      throw ParseError("trace CSV row needs 5 fields", offset);
    }
    try {
      EpochRecord r;
      r.epoch = std::stoi(cells[0]);
      r.loss = std::stod(cells[1]);
      r.rate = std::stod(cells[2]);
      r.distortion = std::stod(cells[3]);
      r.wall_ms = std::stod(cells[4]);
      trace.records.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("trace CSV row has a non-numeric field", offset);
    }
    offset += line.size() + 1;
  }
  return trace;
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << trace_to_csv(trace);
}

}  // namespace bsvae
