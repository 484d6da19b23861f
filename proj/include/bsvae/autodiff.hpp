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

// Reverse-mode automatic differentiation over dense row-major float64 tensors.
//
// A Tensor is either a constant (no tape) or a node on a Tape. Operations on
// constants return constants; an operation with at least one input on a tape
// records a node with a backward rule on that tape. Only tensors created with
// Tape::parameter() receive gradients.
//
// A tape supports exactly one backward() call. Build a fresh tape for every
// forward/backward pair.

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsvae::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

class Tape;

class Tensor {
 public:
  // Rank-0 zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  // Value of a single-element tensor.
  double item() const;

  // Rank-2 helpers.
  std::size_t rows() const;
  std::size_t cols() const;

  bool on_tape() const { return node_.has_value(); }
  std::optional<NodeId> node() const { return node_; }
  Tape* tape() const { return tape_; }

  // Writable view of a constant tensor's data. Copies first if the buffer is
  // shared. Throws std::logic_error for tensors on a tape.
  std::span<double> mutable_data();

  // Copy of the value with the tape link dropped.
  Tensor detached() const;

  // Same data under a new shape with equal element count. Stays on the tape.
  Tensor reshaped(Shape shape) const;

  bool same_values(const Tensor& other) const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::optional<NodeId> node_;
};

// Gradient buffer for one recorded input; null when the input is a constant
// and no gradient is wanted.
using GradSlot = std::vector<double>*;

// Receives the gradient of the node's output and accumulates (+=) into the
// slots of its inputs, in input order.
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<GradSlot> input_grads)>;

class Gradients {
 public:
  explicit Gradients(std::map<NodeId, Tensor> grads) : grads_(std::move(grads)) {}

  // Gradient for a parameter tensor. Throws std::out_of_range when `param` is
  // not a parameter of the tape that produced these gradients.
  const Tensor& at(const Tensor& param) const;
  bool contains(const Tensor& param) const;
  std::size_t size() const { return grads_.size(); }
  const std::map<NodeId, Tensor>& all() const { return grads_; }

 private:
  std::map<NodeId, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf.
  Tensor parameter(const Tensor& value);

  // Gradients of a scalar `loss` with respect to every parameter. Node
  // gradients are propagated in descending node order, so accumulation into
  // any node happens in a fixed order.
  Gradients backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Records an operation result. Used by the primitive ops.
  Tensor record(Shape shape, std::vector<double> value, std::span<const Tensor* const> inputs, BackwardFn backward);

 private:
  struct Node {
    Shape shape;
    std::vector<std::optional<NodeId>> inputs;
    BackwardFn backward;
    bool is_parameter = false;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// (m x k) * (k x n) -> (m x n)
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Per-row reductions of an (m x n) matrix to a length-m vector.
Tensor row_sum(const Tensor& a);
Tensor row_mean(const Tensor& a);

// (m x n) + bias(n), the bias added to every row.
Tensor add_row(const Tensor& a, const Tensor& bias);

// Columns [begin, end) of an (m x n) matrix.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

}  // namespace bsvae::ad
