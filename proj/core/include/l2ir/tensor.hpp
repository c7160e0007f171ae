// Copyright 2026 The l2ir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Operations record themselves on the calling thread's active Tape when at
// least one input requires a gradient. Without an active tape every
// operation is a plain forward computation, which is how inference runs.
//
//   Tape<double> tape;
//   Tape<double>::Scope scope(tape);
//   auto loss = sum(mul(x, x));
//   tape.backward(loss);   // x.grad() == 2 * x
//
// Only float and double are instantiated.

#ifndef L2IR_TENSOR_HPP_
#define L2IR_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace l2ir {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Stand-in for -inf in attention masks; exp() of it underflows to exactly 0.
inline constexpr double kMaskedLogit = -1e30;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  std::function<void()> backward;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values);
  // A leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values);

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  // Matrix view: rows() * cols() == numel(); rank-1 tensors are one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  // Empty when no gradient has reached this tensor.
  std::span<const T> grad() const { return node_->grad; }
  // Zero-initialised on first use.
  std::span<T> grad_accumulator() const;
  void zero_grad() { node_->grad.clear(); }

  // A new leaf holding a copy of the values, detached from any tape.
  Tensor detach() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of differentiable operations. Backward visits nodes in
// reverse recording order, each exactly once.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes `tape` the active tape of the current thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return active_; }

  void record(std::shared_ptr<TensorNode<T>> node);
  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one value.
  void backward(const Tensor<T>& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  static thread_local Tape* active_;
  std::vector<std::shared_ptr<TensorNode<T>>> nodes_;
};

// Builds the output of a differentiable operation. `backward` receives the
// output gradient and accumulates into the inputs through
// Tensor::grad_accumulator(). Nothing is recorded when no tape is active or
// no input requires a gradient.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(std::span<const T>)> backward);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
// axis 0 stacks rows, axis 1 stacks columns.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis` of a matrix.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin,
                std::size_t end);

// [m x k] * [k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a * b^T for a [m x k], b [n x k].
template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b);

// Row-wise softmax with max subtraction. Entries at or below kMaskedLogit
// (and -inf) produce exactly 0; a fully masked row is an error.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x);
// [m x 1] column holding x[i, index[i]].
template <typename T>
Tensor<T> pick_cols(const Tensor<T>& x, std::span<const std::uint32_t> index);

// Gathers rows of `table`; backward scatter-adds into the looked-up rows.
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table,
                           std::span<const std::uint32_t> ids);
// x / sqrt(mean(x^2) + eps) * gain, per row. `gain` has one entry per column.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps = T(1e-5));
// Inverted dropout; the mask is a pure function of `seed`. p == 0 is identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed);
// [m x 1] cosine similarity of matching rows.
template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x);

}  // namespace l2ir

#endif  // L2IR_TENSOR_HPP_
