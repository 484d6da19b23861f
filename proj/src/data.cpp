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

#include "bsvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "bsvae/error.hpp"
#include "bsvae/rng.hpp"

namespace bsvae {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::kFull:
      return "full";
    case Split::kTrain:
      return "train";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

Dataset::Dataset(std::size_t count, std::size_t dim, std::vector<double> samples, Split split, std::string source,
                 std::pair<std::size_t, std::size_t> image_shape)
    : count_(count),
      dim_(dim),
      samples_(std::move(samples)),
      split_(split),
      source_(std::move(source)),
      image_shape_(image_shape) {
  if (count_ == 0 || dim_ == 0) {
    throw ConfigError("dataset needs at least one sample and one dimension");
  }
  if (samples_.size() != count_ * dim_) {
    throw ShapeError("dataset holds " + std::to_string(samples_.size()) + " values, expected " +
                     std::to_string(count_ * dim_));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i] >= 0.0 && samples_[i] <= 1.0)) {
      throw DomainError("dataset value " + std::to_string(samples_[i]) + " at index " + std::to_string(i) +
                        " outside [0, 1]");
    }
  }
  if (image_shape_.first * image_shape_.second != dim_) {
    image_shape_ = {1, dim_};
  }
}

std::span<const double> Dataset::row(std::size_t i) const {
  if (i >= count_) {
    throw std::out_of_range("dataset row " + std::to_string(i) + " of " + std::to_string(count_));
  }
  return std::span<const double>(samples_).subspan(i * dim_, dim_);
}

ad::Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return ad::Tensor::matrix(indices.size(), dim_, std::move(out));
}

ad::Tensor Dataset::batch(std::size_t begin, std::size_t end) const {
  if (begin > end || end > count_) {
    throw std::out_of_range("dataset batch range out of bounds");
  }
  std::vector<double> out(samples_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                          samples_.begin() + static_cast<std::ptrdiff_t>(end * dim_));
  return ad::Tensor::matrix(end - begin, dim_, std::move(out));
}

Dataset Dataset::select(std::span<const std::size_t> indices, Split split) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    const auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Dataset(indices.size(), dim_, std::move(out), split, source_, image_shape_);
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n > count_) {
    throw ConfigError("head(" + std::to_string(n) + ") on a dataset of " + std::to_string(count_) + " samples");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return select(idx, split_);
}

std::vector<double> Dataset::mean_sample() const {
  std::vector<double> mean(dim_, 0.0);
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t d = 0; d < dim_; ++d) {
      mean[d] += samples_[i * dim_ + d];
    }
  }
  for (double& v : mean) {
    v /= static_cast<double>(count_);
  }
  return mean;
}

Dataset parse_idx(std::span<const std::uint8_t> bytes, const std::string& source,
                  std::optional<std::size_t> expected_count) {
  if (bytes.size() < 16) {
    throw ParseError("IDX header truncated: " + std::to_string(bytes.size()) + " of 16 bytes", bytes.size());
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw ParseError("IDX magic " + hex32(magic) + " is not an image file (expected " + hex32(kIdxImageMagic) + ")", 0);
  }
  const std::uint32_t count = read_be32(bytes, 4);
  const std::uint32_t rows = read_be32(bytes, 8);
  const std::uint32_t cols = read_be32(bytes, 12);
  if (count == 0) {
    throw ParseError("IDX image count is zero", 4);
  }
  if (rows == 0) {
    throw ParseError("IDX row count is zero", 8);
  }
  if (cols == 0) {
    throw ParseError("IDX column count is zero", 12);
  }
  if (expected_count && *expected_count != count) {
    throw ParseError("IDX image count " + std::to_string(count) + " differs from expected " +
                         std::to_string(*expected_count),
                     4);
  }
  const std::uint64_t dim = static_cast<std::uint64_t>(rows) * cols;
  const std::size_t available = bytes.size() - 16;
  // dim * count can exceed 64 bits; compare by division first.
  if (dim > available / count) {
    throw ParseError("IDX payload truncated: header promises " + std::to_string(count) + " images of " +
                         std::to_string(dim) + " bytes, file has " + std::to_string(available),
                     bytes.size());
  }
  const std::size_t payload = static_cast<std::size_t>(dim) * count;
  if (payload < available) {
    throw ParseError("IDX file has " + std::to_string(available - payload) + " trailing bytes after the payload",
                     16 + payload);
  }
  std::vector<double> samples(payload);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  }
  return Dataset(count, static_cast<std::size_t>(dim), std::move(samples), Split::kFull, source, {rows, cols});
}

Dataset load_idx(const std::filesystem::path& images_path, std::optional<std::size_t> expected_count) {
  std::ifstream in(images_path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open IDX file " + images_path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes, images_path.string(), expected_count);
}

std::vector<std::uint8_t> encode_idx(const Dataset& dataset) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + dataset.samples().size());
  const auto [rows, cols] = dataset.image_shape();
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(dataset.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (double v : dataset.samples()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return out;
}

std::vector<std::vector<double>> synthetic_blob_means(std::size_t dim, std::size_t modes, std::uint64_t seed) {
  CounterRng rng(seed, Stream::kData);
  std::vector<std::vector<double>> means(modes, std::vector<double>(dim));
  for (auto& m : means) {
    for (double& v : m) {
      v = rng.uniform(0.2, 0.8);
    }
  }
  return means;
}

Dataset synthetic_blobs(std::size_t n, std::size_t dim, std::size_t modes, std::uint64_t seed, double spread) {
  if (n == 0 || dim == 0 || modes == 0) {
    throw ConfigError("synthetic_blobs needs n, dim and modes >= 1");
  }
  if (!(spread >= 0.0)) {
    throw ConfigError("synthetic_blobs spread must be non-negative");
  }
  const auto means = synthetic_blob_means(dim, modes, seed);
  CounterRng rng(derive_seed(seed, 1), Stream::kData);
  std::vector<double> samples(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mean = means[rng.below(modes)];
    for (std::size_t d = 0; d < dim; ++d) {
      samples[i * dim + d] = std::clamp(mean[d] + spread * rng.normal(), 0.0, 1.0);
    }
  }
  std::ostringstream source;
  source << "synthetic_blobs(n=" << n << ",d=" << dim << ",k=" << modes << ",seed=" << seed << ",spread=" << spread
         << ")";
  return Dataset(n, dim, std::move(samples), Split::kFull, source.str());
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::uint64_t round) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(derive_seed(seed, round), Stream::kShuffle);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::pair<Dataset, Dataset> split_and_shuffle(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1), got " + std::to_string(test_fraction));
  }
  const std::size_t n = dataset.size();
  if (n < 2) {
    throw ConfigError("cannot split a dataset with fewer than 2 samples");
  }
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, Stream::kSplit);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  const std::span<const std::size_t> all(idx);
  return {dataset.select(all.subspan(n_test), Split::kTrain), dataset.select(all.first(n_test), Split::kTest)};
}

}  // namespace bsvae
