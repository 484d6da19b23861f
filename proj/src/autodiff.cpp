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

#include "bsvae/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bsvae/error.hpp"

namespace bsvae::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Values = std::shared_ptr<const std::vector<double>>;

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) {
      continue;
    }
    if (tape != nullptr && tape != t->tape()) {
      throw std::logic_error("operands are recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   BackwardFn backward) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) {
    return Tensor(std::move(shape), std::move(value));
  }
  const std::vector<const Tensor*> list(inputs);
  return tape->record(std::move(shape), std::move(value), list, std::move(backward));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + to_string(a.shape()));
  }
}

// Elementwise unary op with derivative computed from (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto in = a.data();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), fwd);
  auto backward = [a, out_copy = a.on_tape() ? out : std::vector<double>{}, deriv](
                      std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] == nullptr) {
      return;
    }
    auto& ga = *slots[0];
    const auto x = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * deriv(x[i], out_copy[i]);
    }
  };
  return make_result(a.shape(), std::move(out), {&a}, std::move(backward));
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    n *= extent;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (element_count(shape_) != data.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return (*data_)[0];
}

std::size_t Tensor::rows() const {
  require_rank2("rows", *this);
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank2("cols", *this);
  return shape_[1];
}

std::span<double> Tensor::mutable_data() {
  if (on_tape()) {
    throw std::logic_error("mutable_data() on a tensor recorded on a tape");
  }
  if (data_.use_count() > 1) {
    data_ = std::make_shared<const std::vector<double>>(*data_);
  }
  // The buffer is uniquely owned here.
  auto& owned = const_cast<std::vector<double>&>(*data_);
  return owned;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  std::vector<double> value(data_->begin(), data_->end());
  auto backward = [](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      auto& ga = *slots[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
      }
    }
  };
  return make_result(std::move(shape), std::move(value), {this}, std::move(backward));
}

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ && *data_ == *other.data_;
}

// ---------------------------------------------------------------------------
// Gradients and Tape

const Tensor& Gradients::at(const Tensor& param) const {
  if (!param.node()) {
    throw std::out_of_range("no gradient for a constant tensor");
  }
  auto it = grads_.find(*param.node());
  if (it == grads_.end()) {
    throw std::out_of_range("tensor is not a parameter of this tape");
  }
  return it->second;
}

bool Gradients::contains(const Tensor& param) const {
  return param.node() && grads_.count(*param.node()) > 0;
}

Tensor Tape::parameter(const Tensor& value) {
  if (consumed_) {
    throw std::logic_error("tape already consumed by backward()");
  }
  Node node;
  node.shape = value.shape();
  node.is_parameter = true;
  nodes_.push_back(std::move(node));
  Tensor t;
  t.shape_ = value.shape();
  t.data_ = value.data_;
  t.tape_ = this;
  t.node_ = NodeId{nodes_.size() - 1};
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> value, std::span<const Tensor* const> inputs,
                    BackwardFn backward) {
  if (consumed_) {
    throw std::logic_error("tape already consumed by backward()");
  }
  Node node;
  node.shape = shape;
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    node.inputs.push_back(in->on_tape() ? in->node() : std::nullopt);
  }
  nodes_.push_back(std::move(node));
  Tensor t(std::move(shape), std::move(value));
  t.tape_ = this;
  t.node_ = NodeId{nodes_.size() - 1};
  return t;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw std::logic_error("backward() called twice on the same tape");
  }
  if (loss.tape() != this || !loss.node()) {
    throw std::invalid_argument("backward(): loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw ShapeError("backward(): loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  consumed_ = true;

  std::vector<std::vector<double>> grads(nodes_.size());
  const std::size_t root = loss.node()->index;
  grads[root].assign(1, 1.0);

  std::vector<GradSlot> slots;
  for (std::size_t id = root + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (grads[id].empty() || !node.backward) {
      continue;
    }
    slots.clear();
    for (const auto& input : node.inputs) {
      if (!input) {
        slots.push_back(nullptr);
        continue;
      }
      auto& buffer = grads[input->index];
      if (buffer.empty()) {
        buffer.assign(element_count(nodes_[input->index].shape), 0.0);
      }
      slots.push_back(&buffer);
    }
    node.backward(grads[id], slots);
    // Interior gradients are no longer needed once propagated.
    if (!node.is_parameter) {
      std::vector<double>().swap(grads[id]);
    }
    node.backward = nullptr;
  }

  std::map<NodeId, Tensor> result;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].is_parameter) {
      continue;
    }
    const Shape& shape = nodes_[id].shape;
    if (grads[id].empty()) {
      result.emplace(NodeId{id}, Tensor::zeros(shape));
    } else {
      result.emplace(NodeId{id}, Tensor(shape, std::move(grads[id])));
    }
  }
  return Gradients(std::move(result));
}

// ---------------------------------------------------------------------------
// Elementwise binary ops

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] + b[i];
  }
  auto backward = [](std::span<const double> g, std::span<GradSlot> slots) {
    for (GradSlot slot : slots) {
      if (slot != nullptr) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*slot)[i] += g[i];
        }
      }
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] - b[i];
  }
  auto backward = [](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[0])[i] += g[i];
      }
    }
    if (slots[1] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[1])[i] -= g[i];
      }
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] * b[i];
  }
  auto backward = [a, b](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[0])[i] += g[i] * b[i];
      }
    }
    if (slots[1] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[1])[i] += g[i] * a[i];
      }
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b[i] == 0.0 || std::isnan(b[i])) {
      throw DomainError("div: divisor element " + std::to_string(i) + " is " + std::to_string(b[i]));
    }
    out[i] = a[i] / b[i];
  }
  auto backward = [a, b](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[0])[i] += g[i] / b[i];
      }
    }
    if (slots[1] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[1])[i] -= g[i] * a[i] / (b[i] * b[i]);
      }
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, std::move(backward));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner extents differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  {
    Eigen::Map<const RowMatrix> lhs(a.data().data(), m, k);
    Eigen::Map<const RowMatrix> rhs(b.data().data(), k, n);
    Eigen::Map<RowMatrix> res(out.data(), m, n);
    res.noalias() = lhs * rhs;
  }
  auto backward = [a, b, m, k, n](std::span<const double> g, std::span<GradSlot> slots) {
    Eigen::Map<const RowMatrix> grad(g.data(), m, n);
    if (slots[0] != nullptr) {
      Eigen::Map<const RowMatrix> rhs(b.data().data(), k, n);
      Eigen::Map<RowMatrix> ga(slots[0]->data(), m, k);
      ga.noalias() += grad * rhs.transpose();
    }
    if (slots[1] != nullptr) {
      Eigen::Map<const RowMatrix> lhs(a.data().data(), m, k);
      Eigen::Map<RowMatrix> gb(slots[1]->data(), k, n);
      gb.noalias() += lhs.transpose() * grad;
    }
  };
  return make_result({m, n}, std::move(out), {&a, &b}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0)) {
      throw DomainError("log: element " + std::to_string(i) + " is non-positive (" + std::to_string(a[i]) + ")");
    }
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw std::invalid_argument("clamp: lo must not exceed hi");
  }
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions and structural ops

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) {
    total += v;
  }
  auto backward = [](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      for (double& v : *slots[0]) {
        v += g[0];
      }
    }
  };
  return make_result({}, {total}, {&a}, std::move(backward));
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) {
    throw ShapeError("mean of an empty tensor");
  }
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  require_rank2("row_sum", a);
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> out(m, 0.0);
  const auto x = a.data();
  for (std::size_t r = 0; r < m; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      total += x[r * n + c];
    }
    out[r] = total;
  }
  auto backward = [n](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] == nullptr) {
      return;
    }
    auto& ga = *slots[0];
    for (std::size_t r = 0; r < g.size(); ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        ga[r * n + c] += g[r];
      }
    }
  };
  return make_result({m}, std::move(out), {&a}, std::move(backward));
}

Tensor row_mean(const Tensor& a) {
  require_rank2("row_mean", a);
  if (a.cols() == 0) {
    throw ShapeError("row_mean of a matrix with zero columns");
  }
  return scale(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_rank2("add_row", a);
  if (bias.rank() != 1 || bias.size() != a.cols()) {
    throw ShapeError("add_row: bias " + to_string(bias.shape()) + " does not match rows of " + to_string(a.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] += b[c];
    }
  }
  auto backward = [m, n](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*slots[0])[i] += g[i];
      }
    }
    if (slots[1] != nullptr) {
      auto& gb = *slots[1];
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          gb[c] += g[r * n + c];
        }
      }
    }
  };
  return make_result({m, n}, std::move(out), {&a, &bias}, std::move(backward));
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (begin > end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for " + to_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  const auto x = a.data();
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * n + begin), w, out.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  auto backward = [m, n, w, begin](std::span<const double> g, std::span<GradSlot> slots) {
    if (slots[0] == nullptr) {
      return;
    }
    auto& ga = *slots[0];
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        ga[r * n + begin + c] += g[r * w + c];
      }
    }
  };
  return make_result({m, w}, std::move(out), {&a}, std::move(backward));
}

}  // namespace bsvae::ad
