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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsvae/autodiff.hpp"

namespace bsvae {

enum class Split { kFull, kTrain, kTest };

const char* to_string(Split split);

// N x D samples in [0, 1], row-major. Image geometry (rows x cols == D) is
// carried along for grid rendering; non-image data uses 1 x D.
class Dataset {
 public:
  Dataset(std::size_t count, std::size_t dim, std::vector<double> samples, Split split, std::string source,
          std::pair<std::size_t, std::size_t> image_shape = {0, 0});

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  Split split() const { return split_; }
  const std::string& source() const { return source_; }
  std::pair<std::size_t, std::size_t> image_shape() const { return image_shape_; }

  std::span<const double> samples() const { return samples_; }
  std::span<const double> row(std::size_t i) const;

  // Rows at `indices`, as a constant batch x dim tensor.
  ad::Tensor batch(std::span<const std::size_t> indices) const;
  ad::Tensor batch(std::size_t begin, std::size_t end) const;

  Dataset select(std::span<const std::size_t> indices, Split split) const;
  // First n rows.
  Dataset head(std::size_t n) const;

  std::vector<double> mean_sample() const;

 private:
  std::size_t count_;
  std::size_t dim_;
  std::vector<double> samples_;
  Split split_;
  std::string source_;
  std::pair<std::size_t, std::size_t> image_shape_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

// IDX image file: big-endian u32 magic 0x00000803, count, rows, cols, then
// count*rows*cols bytes. Pixels are scaled by 1/255. The payload must match
// the header exactly. If `expected_count` is given the header count must
// equal it.
Dataset parse_idx(std::span<const std::uint8_t> bytes, const std::string& source,
                  std::optional<std::size_t> expected_count = std::nullopt);
Dataset load_idx(const std::filesystem::path& images_path, std::optional<std::size_t> expected_count = std::nullopt);

// Writes samples back as an IDX image file (values rounded to bytes).
std::vector<std::uint8_t> encode_idx(const Dataset& dataset);

// n samples from k isotropic Gaussians with std `spread`, means drawn
// uniformly from (0.2, 0.8)^d, clipped to [0, 1].
Dataset synthetic_blobs(std::size_t n, std::size_t dim, std::size_t modes, std::uint64_t seed, double spread = 0.05);
// The mode means synthetic_blobs uses for the same (dim, modes, seed).
std::vector<std::vector<double>> synthetic_blob_means(std::size_t dim, std::size_t modes, std::uint64_t seed);

// Shuffles with `seed` and puts round(n * test_fraction) rows into the test
// split. Both splits are non-empty.
std::pair<Dataset, Dataset> split_and_shuffle(const Dataset& dataset, double test_fraction, std::uint64_t seed);

// Fisher-Yates permutation of [0, n) drawn from `seed`'s shuffle substream.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t round);

}  // namespace bsvae
