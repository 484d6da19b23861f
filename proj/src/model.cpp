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

#include "bsvae/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bsvae/error.hpp"
#include "bsvae/rng.hpp"

namespace bsvae {

using ad::Tensor;

namespace {

constexpr char kMagic[4] = {'B', 'S', 'V', '1'};

std::vector<std::pair<std::uint32_t, std::uint32_t>> encoder_dims(const ArchSpec& arch) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims;
  std::uint32_t in = arch.data_dim;
  for (std::uint32_t h : arch.hidden) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, 2 * arch.latent_dim);
  return dims;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> decoder_dims(const ArchSpec& arch) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims;
  std::uint32_t in = arch.latent_dim;
  for (auto it = arch.hidden.rbegin(); it != arch.hidden.rend(); ++it) {
    dims.emplace_back(in, *it);
    in = *it;
  }
  dims.emplace_back(in, arch.data_dim);
  return dims;
}

Tensor dense_forward(const std::vector<DenseLayer>& layers, Tensor h) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ad::add_row(ad::matmul(h, layers[i].weight), layers[i].bias);
    if (i + 1 < layers.size()) {
      h = ad::tanh(h);
    }
  }
  return h;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8, "f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n, "bytes");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void ArchSpec::validate() const {
  if (data_dim == 0 || latent_dim == 0) {
    throw ConfigError("architecture needs positive data_dim and latent_dim");
  }
  if (hidden.empty()) {
    throw ConfigError("architecture needs at least one hidden layer");
  }
  for (std::uint32_t h : hidden) {
    if (h == 0) {
      throw ConfigError("hidden layer widths must be positive");
    }
  }
}

VaeModel::VaeModel(ArchSpec arch, std::vector<DenseLayer> encoder, std::vector<DenseLayer> decoder)
    : arch_(std::move(arch)), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {}

VaeModel VaeModel::init(std::uint64_t seed, const ArchSpec& arch) {
  arch.validate();
  CounterRng rng(seed, Stream::kInit);
  auto make = [&rng](const std::vector<std::pair<std::uint32_t, std::uint32_t>>& dims) {
    std::vector<DenseLayer> layers;
    for (auto [fan_in, fan_out] : dims) {
      const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
      std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
      for (double& v : w) {
        v = bound * (2.0 * rng.uniform() - 1.0);
      }
      layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)), Tensor::zeros({fan_out})});
    }
    return layers;
  };
  auto enc = make(encoder_dims(arch));
  auto dec = make(decoder_dims(arch));
  return VaeModel(arch, std::move(enc), std::move(dec));
}

VaeModel VaeModel::zeros(const ArchSpec& arch) {
  arch.validate();
  auto make = [](const std::vector<std::pair<std::uint32_t, std::uint32_t>>& dims) {
    std::vector<DenseLayer> layers;
    for (auto [fan_in, fan_out] : dims) {
      layers.push_back({Tensor::zeros({fan_in, fan_out}), Tensor::zeros({fan_out})});
    }
    return layers;
  };
  return VaeModel(arch, make(encoder_dims(arch)), make(decoder_dims(arch)));
}

VaeModel VaeModel::from_parameters(const ArchSpec& arch, std::vector<Tensor> params) {
  VaeModel model = zeros(arch);
  auto named = model.parameters();
  if (named.size() != params.size()) {
    throw ShapeError("expected " + std::to_string(named.size()) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].value->shape() != params[i].shape()) {
      throw ShapeError(named[i].name + ": expected " + ad::to_string(named[i].value->shape()) + ", got " +
                       ad::to_string(params[i].shape()));
    }
    *named[i].value = std::move(params[i]);
  }
  return model;
}

std::vector<NamedParameter> VaeModel::parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    out.push_back({"encoder." + std::to_string(i) + ".weight", &encoder_[i].weight});
    out.push_back({"encoder." + std::to_string(i) + ".bias", &encoder_[i].bias});
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    out.push_back({"decoder." + std::to_string(i) + ".weight", &decoder_[i].weight});
    out.push_back({"decoder." + std::to_string(i) + ".bias", &decoder_[i].bias});
  }
  return out;
}

std::vector<Tensor> VaeModel::parameter_values() const {
  std::vector<Tensor> out;
  for (const auto* layers : {&encoder_, &decoder_}) {
    for (const DenseLayer& layer : *layers) {
      out.push_back(layer.weight);
      out.push_back(layer.bias);
    }
  }
  return out;
}

std::size_t VaeModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameter_values()) {
    n += t.size();
  }
  return n;
}

VaeModel VaeModel::bind(ad::Tape& tape) const {
  VaeModel copy = *this;
  for (NamedParameter& p : copy.parameters()) {
    *p.value = tape.parameter(*p.value);
  }
  return copy;
}

VaeModel VaeModel::detached() const {
  VaeModel copy = *this;
  for (NamedParameter& p : copy.parameters()) {
    *p.value = p.value->detached();
  }
  return copy;
}

bool VaeModel::all_finite() const {
  for (const Tensor& t : parameter_values()) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

bool VaeModel::same_values(const VaeModel& other) const {
  if (!(arch_ == other.arch_)) {
    return false;
  }
  const auto a = parameter_values();
  const auto b = other.parameter_values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_values(b[i])) {
      return false;
    }
  }
  return true;
}

DiagGaussian encode(const VaeModel& model, const Tensor& x) {
  const ArchSpec& arch = model.arch();
  if (x.rank() != 2 || x.cols() != arch.data_dim) {
    throw ShapeError("encode: expected batch x " + std::to_string(arch.data_dim) + ", got " +
                     ad::to_string(x.shape()));
  }
  const Tensor h = dense_forward(model.encoder(), x);
  Tensor mu = ad::slice_cols(h, 0, arch.latent_dim);
  Tensor log_var = ad::clamp(ad::slice_cols(h, arch.latent_dim, 2 * arch.latent_dim), -kLogVarClamp, kLogVarClamp);
  return DiagGaussian(std::move(mu), std::move(log_var));
}

Tensor decode(const VaeModel& model, const Tensor& z) {
  const ArchSpec& arch = model.arch();
  if (z.rank() != 2 || z.cols() != arch.latent_dim) {
    throw ShapeError("decode: expected batch x " + std::to_string(arch.latent_dim) + ", got " +
                     ad::to_string(z.shape()));
  }
  return dense_forward(model.decoder(), z);
}

std::vector<std::uint8_t> serialize_checkpoint(const VaeModel& model) {
  const ArchSpec& arch = model.arch();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(2 + arch.hidden.size()));
  put_u32(out, arch.data_dim);
  put_u32(out, arch.latent_dim);
  for (std::uint32_t h : arch.hidden) {
    put_u32(out, h);
  }
  out.reserve(out.size() + 8 * model.parameter_count());
  for (const Tensor& t : model.parameter_values()) {
    for (double v : t.data()) {
      put_f64(out, v);
    }
  }
  return out;
}

VaeModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw ParseError("checkpoint magic is not BSV1", 0);
  }
  const std::size_t count_offset = in.pos();
  const std::uint32_t n = in.u32();
  if (n < 3) {
    throw ParseError("checkpoint arch list needs at least 3 extents, got " + std::to_string(n), count_offset);
  }
  in.need(4ULL * n, "arch extents");
  ArchSpec arch;
  arch.data_dim = in.u32();
  arch.latent_dim = in.u32();
  arch.hidden.clear();
  for (std::uint32_t i = 2; i < n; ++i) {
    arch.hidden.push_back(in.u32());
  }
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint arch invalid: ") + e.what(), count_offset);
  }
  VaeModel model = VaeModel::zeros(arch);
  const std::size_t expected = 8 * model.parameter_count();
  if (in.remaining() != expected) {
    throw ParseError("checkpoint parameter block has " + std::to_string(in.remaining()) + " bytes, expected " +
                         std::to_string(expected),
                     in.pos());
  }
  for (NamedParameter& p : model.parameters()) {
    auto values = p.value->mutable_data();
    for (double& v : values) {
      v = in.f64();
    }
  }
  return model;
}

void save_checkpoint(const VaeModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

VaeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace bsvae
