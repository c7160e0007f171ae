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

#include "l2ir/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "l2ir/error.hpp"

namespace l2ir {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t p = 0; p < m; ++p) {
    const T* ap = a + p * k;
    const T* bp = b + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = ap[i];
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, k, n, a, bt.data(), c);
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(a.shape()));
  }
}

template <typename T>
bool is_masked(T x) {
  return x <= static_cast<T>(kMaskedLogit) / 2;
}

template <typename T>
void check_all_masked(std::size_t row, T row_max) {
  if (is_masked(row_max)) {
    throw NumericalError("softmax_rows: row " + std::to_string(row) +
                         " is fully masked");
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D df) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  auto result_values = out;
  return make_op<T>(a.shape(), std::move(out), {a},
                    [a, y = std::move(result_values), df](std::span<const T> g) mutable {
                      if (!a.requires_grad()) return;
                      auto ga = a.grad_accumulator();
                      auto x = a.data();
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * df(x[i], y[i]);
                      }
                    });
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto node = std::make_shared<TensorNode<T>>();
  node->value.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  const auto& s = node_->shape;
  if (s.size() < 2) return 1;
  return s[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  const auto& s = node_->shape;
  if (s.empty()) return 1;
  if (s.size() == 1) return s[0];
  return numel() / s[0];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
  return node_->value[row * cols() + col];
}

template <typename T>
std::span<T> Tensor<T>::grad_accumulator() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->value);
}

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(active_) {
  active_ = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  active_ = previous_;
}

template <typename T>
void Tape<T>::record(std::shared_ptr<TensorNode<T>> node) {
  nodes_.push_back(std::move(node));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  Tensor<T> seed = loss;
  seed.grad_accumulator()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward();
  }
}

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(std::span<const T>)> backward) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (node->value.size() != shape_numel(node->shape)) {
    throw ShapeError("make_op: value count does not match shape " +
                     shape_string(node->shape));
  }
  Tape<T>* tape = Tape<T>::active();
  const bool record =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(),
                                     [](const auto& t) { return t.requires_grad(); });
  if (record) {
    node->requires_grad = true;
    node->backward = [self = node.get(), fn = std::move(backward)]() {
      fn(self->grad);
    };
    tape->record(node);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b},
                    [a, b](std::span<const T> g) mutable {
                      for (const Tensor<T>* t : {&a, &b}) {
                        if (!t->requires_grad()) continue;
                        auto gt = t->grad_accumulator();
                        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
                      }
                    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b},
                    [a, b](std::span<const T> g) mutable {
                      if (a.requires_grad()) {
                        auto ga = a.grad_accumulator();
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      }
                      if (b.requires_grad()) {
                        auto gb = b.grad_accumulator();
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                      }
                    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op<T>(a.shape(), std::move(out), {a, b},
                    [a, b](std::span<const T> g) mutable {
                      auto av = a.data();
                      auto bv = b.data();
                      if (a.requires_grad()) {
                        auto ga = a.grad_accumulator();
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                      }
                      if (b.requires_grad()) {
                        auto gb = b.grad_accumulator();
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                      }
                    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, [factor](T x) { return x * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return unary(
      a, [=](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [=](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        return cdf + x * pdf;
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T x : a.data()) total += x;
  return make_op<T>({}, {total}, {a}, [a](std::span<const T> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.grad_accumulator();
    for (auto& v : ga) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  T total = 0;
  for (T x : a.data()) total += x;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_op<T>({}, {total * inv}, {a}, [a, inv](std::span<const T> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.grad_accumulator();
    for (auto& v : ga) v += g[0] * inv;
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return make_op<T>({n, m}, std::move(out), {a},
                    [a, m, n](std::span<const T> g) mutable {
                      if (!a.requires_grad()) return;
                      auto ga = a.grad_accumulator();
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                      }
                    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) {
      throw ShapeError("concat: incompatible shapes " + shape_string(parts[0].shape()) +
                       " and " + shape_string(p.shape()));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t out_rows = axis == 0 ? total : fixed;
  const std::size_t out_cols = axis == 0 ? fixed : total;
  std::vector<T> out(out_rows * out_cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pv = p.data();
    const std::size_t r = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t oi = axis == 0 ? offset + i : i;
        const std::size_t oj = axis == 0 ? j : offset + j;
        out[oi * out_cols + oj] = pv[i * c + j];
      }
    }
    offset += axis == 0 ? r : c;
  }
  return make_op<T>({out_rows, out_cols}, std::move(out), parts,
                    [parts, axis, out_cols](std::span<const T> g) mutable {
                      std::size_t offset = 0;
                      for (auto& p : parts) {
                        const std::size_t r = p.rows(), c = p.cols();
                        if (p.requires_grad()) {
                          auto gp = p.grad_accumulator();
                          for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const std::size_t oi = axis == 0 ? offset + i : i;
                              const std::size_t oj = axis == 0 ? j : offset + j;
                              gp[i * c + j] += g[oi * out_cols + oj];
                            }
                          }
                        }
                        offset += axis == 0 ? r : c;
                      }
                    });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin,
                std::size_t end) {
  require_matrix("slice", a);
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (begin > end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of bounds for " +
                     shape_string(a.shape()));
  }
  const std::size_t r = axis == 0 ? end - begin : m;
  const std::size_t c = axis == 0 ? n : end - begin;
  const std::size_t r0 = axis == 0 ? begin : 0;
  const std::size_t c0 = axis == 0 ? 0 : begin;
  std::vector<T> out(r * c);
  auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((r0 + i) * n + c0), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return make_op<T>({r, c}, std::move(out), {a},
                    [a, r, c, r0, c0, n](std::span<const T> g) mutable {
                      if (!a.requires_grad()) return;
                      auto ga = a.grad_accumulator();
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                          ga[(r0 + i) * n + c0 + j] += g[i * c + j];
                        }
                      }
                    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) +
                     " * " + shape_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_op<T>({m, n}, std::move(out), {a, b},
                    [a, b, m, k, n](std::span<const T> g) mutable {
                      if (a.requires_grad()) {
                        gemm_nt(m, n, k, g.data(), b.data().data(),
                                a.grad_accumulator().data());
                      }
                      if (b.requires_grad()) {
                        gemm_tn(m, k, n, a.data().data(), g.data(),
                                b.grad_accumulator().data());
                      }
                    });
}

template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("matmul_transposed", a);
  require_matrix("matmul_transposed", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_transposed: inner dimensions differ, " +
                     shape_string(a.shape()) + " * " + shape_string(b.shape()) + "^T");
  }
  std::vector<T> out(m * n, T(0));
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_op<T>({m, n}, std::move(out), {a, b},
                    [a, b, m, k, n](std::span<const T> g) mutable {
                      if (a.requires_grad()) {
                        gemm_nn(m, n, k, g.data(), b.data().data(),
                                a.grad_accumulator().data());
                      }
                      if (b.requires_grad()) {
                        gemm_tn(m, n, k, g.data(), a.data().data(),
                                b.grad_accumulator().data());
                      }
                    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_matrix("softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T* orow = out.data() + i * n;
    const T row_max = *std::max_element(row, row + n);
    check_all_masked(i, row_max);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = is_masked(row[j]) ? T(0) : std::exp(row[j] - row_max);
      total += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= total;
  }
  auto y = out;
  return make_op<T>({m, n}, std::move(out), {x},
                    [x, y = std::move(y), m, n](std::span<const T> g) mutable {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t i = 0; i < m; ++i) {
                        T dot = 0;
                        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                        for (std::size_t j = 0; j < n; ++j) {
                          gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                        }
                      }
                    });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  require_matrix("log_softmax_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n);
  std::vector<T> probs(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    const T row_max = *std::max_element(row, row + n);
    check_all_masked(i, row_max);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_masked(row[j])) total += std::exp(row[j] - row_max);
    }
    const T lse = row_max + std::log(total);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = row[j] - lse;
      probs[i * n + j] = is_masked(row[j]) ? T(0) : std::exp(row[j] - lse);
    }
  }
  return make_op<T>({m, n}, std::move(out), {x},
                    [x, p = std::move(probs), m, n](std::span<const T> g) mutable {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t i = 0; i < m; ++i) {
                        T total = 0;
                        for (std::size_t j = 0; j < n; ++j) total += g[i * n + j];
                        for (std::size_t j = 0; j < n; ++j) {
                          gx[i * n + j] += g[i * n + j] - p[i * n + j] * total;
                        }
                      }
                    });
}

template <typename T>
Tensor<T> pick_cols(const Tensor<T>& x, std::span<const std::uint32_t> index) {
  require_matrix("pick_cols", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (index.size() != m) {
    throw ShapeError("pick_cols: " + std::to_string(index.size()) +
                     " indices for " + std::to_string(m) + " rows");
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw ShapeError("pick_cols: column index out of range");
    out[i] = x.data()[i * n + idx[i]];
  }
  return make_op<T>({m, 1}, std::move(out), {x},
                    [x, idx = std::move(idx), n](std::span<const T> g) mutable {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t i = 0; i < idx.size(); ++i) gx[i * n + idx[i]] += g[i];
                    });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table,
                           std::span<const std::uint32_t> ids) {
  require_matrix("embedding_lookup", table);
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<std::uint32_t> rows(ids.begin(), ids.end());
  std::vector<T> out(rows.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= vocab) {
      throw ShapeError("embedding_lookup: id " + std::to_string(rows[i]) +
                       " out of range for table " + shape_string(table.shape()));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const std::size_t n = rows.size();
  return make_op<T>({n, d}, std::move(out), {table},
                    [table, rows = std::move(rows), d](std::span<const T> g) mutable {
                      if (!table.requires_grad()) return;
                      auto gt = table.grad_accumulator();
                      for (std::size_t i = 0; i < rows.size(); ++i) {
                        T* dst = gt.data() + rows[i] * d;
                        const T* src = g.data() + i * d;
                        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                      }
                    });
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
  require_matrix("rms_norm", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n) {
    throw ShapeError("rms_norm: gain " + shape_string(gain.shape()) +
                     " does not match input " + shape_string(x.shape()));
  }
  std::vector<T> out(m * n);
  std::vector<T> xhat(m * n);
  std::vector<T> inv_rms(m);
  auto xv = x.data();
  auto gv = gain.data();
  for (std::size_t i = 0; i < m; ++i) {
    T ms = 0;
    for (std::size_t j = 0; j < n; ++j) ms += xv[i * n + j] * xv[i * n + j];
    ms /= static_cast<T>(n);
    inv_rms[i] = T(1) / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = xv[i * n + j] * inv_rms[i];
      out[i * n + j] = xhat[i * n + j] * gv[j];
    }
  }
  return make_op<T>(
      x.shape(), std::move(out), {x, gain},
      [x, gain, xhat = std::move(xhat), inv_rms = std::move(inv_rms), m,
       n](std::span<const T> g) mutable {
        auto gv = gain.data();
        if (gain.requires_grad()) {
          auto gg = gain.grad_accumulator();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
          }
        }
        if (x.requires_grad()) {
          auto gx = x.grad_accumulator();
          for (std::size_t i = 0; i < m; ++i) {
            T dot = 0;
            for (std::size_t j = 0; j < n; ++j) {
              dot += g[i * n + j] * gv[j] * xhat[i * n + j];
            }
            dot /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              gx[i * n + j] +=
                  inv_rms[i] * (g[i * n + j] * gv[j] - xhat[i * n + j] * dot);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw UsageError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  std::vector<T> mask(x.numel(), T(1));
  if (p > 0.0) {
    std::mt19937_64 gen(seed);
    std::bernoulli_distribution keep(1.0 - p);
    const T kept = static_cast<T>(1.0 / (1.0 - p));
    for (auto& v : mask) v = keep(gen) ? kept : T(0);
  }
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_op<T>(x.shape(), std::move(out), {x},
                    [x, mask = std::move(mask)](std::span<const T> g) mutable {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                    });
}

template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix("cosine_rows", a);
  require_same_shape("cosine_rows", a, b);
  const std::size_t m = a.rows(), n = a.cols();
  const T tiny = T(1e-12);
  std::vector<T> na(m), nb(m), dots(m), out(m);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T saa = 0, sbb = 0, sab = 0;
    for (std::size_t j = 0; j < n; ++j) {
      saa += av[i * n + j] * av[i * n + j];
      sbb += bv[i * n + j] * bv[i * n + j];
      sab += av[i * n + j] * bv[i * n + j];
    }
    na[i] = std::max(std::sqrt(saa), tiny);
    nb[i] = std::max(std::sqrt(sbb), tiny);
    dots[i] = sab;
    out[i] = sab / (na[i] * nb[i]);
  }
  auto cos = out;
  return make_op<T>(
      {m, 1}, std::move(out), {a, b},
      [a, b, na = std::move(na), nb = std::move(nb), cos = std::move(cos),
       n](std::span<const T> g) mutable {
        auto av = a.data();
        auto bv = b.data();
        const std::size_t m = cos.size();
        if (a.requires_grad()) {
          auto ga = a.grad_accumulator();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              ga[i * n + j] += g[i] * (bv[i * n + j] / (na[i] * nb[i]) -
                                       cos[i] * av[i * n + j] / (na[i] * na[i]));
            }
          }
        }
        if (b.requires_grad()) {
          auto gb = b.grad_accumulator();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              gb[i * n + j] += g[i] * (av[i * n + j] / (na[i] * nb[i]) -
                                       cos[i] * bv[i * n + j] / (nb[i] * nb[i]));
            }
          }
        }
      });
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  require_matrix("l2_normalize_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(m * n);
  std::vector<T> norms(m);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    T ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[i * n + j] * xv[i * n + j];
    norms[i] = std::max(std::sqrt(ss), T(1e-12));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
  }
  auto y = out;
  return make_op<T>(x.shape(), std::move(out), {x},
                    [x, y = std::move(y), norms = std::move(norms), m,
                     n](std::span<const T> g) mutable {
                      if (!x.requires_grad()) return;
                      auto gx = x.grad_accumulator();
                      for (std::size_t i = 0; i < m; ++i) {
                        T dot = 0;
                        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                        for (std::size_t j = 0; j < n; ++j) {
                          gx[i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norms[i];
                        }
                      }
                    });
}

#define L2IR_INSTANTIATE_TENSOR(T)                                              \
  template class Tensor<T>;                                                     \
  template class Tape<T>;                                                       \
  template Tensor<T> make_op<T>(Shape, std::vector<T>,                          \
                                const std::vector<Tensor<T>>&,                  \
                                std::function<void(std::span<const T>)>);       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                \
  template Tensor<T> exp(const Tensor<T>&);                                     \
  template Tensor<T> log(const Tensor<T>&);                                     \
  template Tensor<T> gelu(const Tensor<T>&);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                     \
  template Tensor<T> mean(const Tensor<T>&);                                    \
  template Tensor<T> transpose(const Tensor<T>&);                               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);        \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t,          \
                           std::size_t);                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> matmul_transposed(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> softmax_rows(const Tensor<T>&);                            \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                        \
  template Tensor<T> pick_cols(const Tensor<T>&, std::span<const std::uint32_t>); \
  template Tensor<T> embedding_lookup(const Tensor<T>&,                         \
                                      std::span<const std::uint32_t>);          \
  template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, T);           \
  template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t);          \
  template Tensor<T> cosine_rows(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&);

L2IR_INSTANTIATE_TENSOR(float)
L2IR_INSTANTIATE_TENSOR(double)

#undef L2IR_INSTANTIATE_TENSOR

}  // namespace l2ir
