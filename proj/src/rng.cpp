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

#include "bsvae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bsvae {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, Stream stream)
    : CounterRng(seed, static_cast<std::uint64_t>(stream)) {}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream_tag)
    : key_(splitmix_finalize(seed ^ splitmix_finalize(stream_tag * kGolden + 1))) {}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t z = key_ + (++counter_) * kGolden;
  return splitmix_finalize(splitmix_finalize(z) ^ key_);
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  double u = uniform();
  while (u == 0.0) {
    u = uniform();
  }
  return lo + (hi - lo) * u;
}

double CounterRng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("CounterRng::below: n must be positive");
  }
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_u64();
  while (v >= limit) {
    v = next_u64();
  }
  return v % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix_finalize(splitmix_finalize(seed + kGolden) ^ (tag * 0xD1B54A32D192ED03ULL + 7));
}

}  // namespace bsvae
