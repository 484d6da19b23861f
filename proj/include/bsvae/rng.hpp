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
#include <optional>

namespace bsvae {

// Named substreams. Each consumer of randomness draws from its own stream so
// that, for example, changing the number of epochs never changes the
// initialization.
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kNoise = 3,
  kData = 4,
  kSplit = 5,
  kEval = 6,
  kSample = 7,
  kSweep = 8,
};

// Counter-based generator: output i of stream (seed, stream) is a fixed
// bijective mix of (key, i). Streams are independent of each other and of
// how much has been drawn from any other stream.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream);
  CounterRng(std::uint64_t seed, std::uint64_t stream_tag);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

// Derives a child seed from a parent seed and a tag. Used for per-point seeds
// in sweeps.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace bsvae
