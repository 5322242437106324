// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with tape-free reverse-mode differentiation.
//
// A `Var` is a handle to a node of a dynamically built graph. Every op
// records its parents and a closure that pushes the node's gradient back
// into them; `backward()` replays those closures in reverse topological
// order. Nodes that do not depend on any `requires_grad` leaf carry no
// closure, so pure inference builds no graph at all.
//
// Broadcasting is limited to scalar-with-tensor.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sir/error.hpp"

namespace sir::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "x" : "") << shape[i];
  }
  out << ']';
  return out.str();
}

/// Row-major dense tensor of doubles.
class Tensor {
 public:
  Tensor() : shape_{0} {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
      throw DimensionError("tensor of shape " + nd::to_string(shape_) + " cannot hold " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

  /// The single value of a one-element tensor.
  double item() const {
    if (data_.size() != 1) {
      throw ArgumentError("item() on tensor of shape " + nd::to_string(shape_));
    }
    return data_[0];
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const { return nd::to_string(shape_); }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool grad_ready = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool has_grad() const noexcept { return grad_ready; }

  Tensor& grad_buffer() {
    if (!grad_ready) {
      grad = Tensor::zeros(value.shape());
      grad_ready = true;
    }
    return grad;
  }

  void accumulate(std::span<const double> g) {
    auto& buf = grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      buf[i] += g[i];
    }
  }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by backward(); zeros if nothing reached this node.
  Tensor grad() const { return node_->has_grad() ? node_->grad : Tensor::zeros(shape()); }

  void zero_grad() {
    node_->grad = Tensor();
    node_->grad_ready = false;
  }

  Node* get() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Trainable leaf.
inline Var leaf(Tensor value, bool requires_grad = true) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

inline Var constant(Tensor value) { return leaf(std::move(value), false); }
inline Var constant(double value) { return leaf(Tensor::scalar(value), false); }

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

/// Wraps `value` into a node depending on `parents`. `backward` is only
/// attached when some parent needs a gradient.
inline Var make(Tensor value, const char* op, std::vector<Var> parents,
                std::function<void(Node&)> backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) {
      node->parents.push_back(p.node());
    }
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

inline bool is_scalar(const Var& v) { return v.size() == 1; }

/// Result shape for a binary elementwise op; only scalar broadcasting.
inline Shape binary_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() == b.shape()) {
    return a.shape();
  }
  if (is_scalar(a)) {
    return b.shape();
  }
  if (is_scalar(b)) {
    return a.shape();
  }
  throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                       to_string(b.shape()) + " differ");
}

/// Applies f(x, y) elementwise with scalar broadcasting; `da`/`db` give the
/// local partials at (x, y).
template <typename F, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* op, F f, DA da, DB db) {
  Shape shape = binary_shape(a, b, op);
  const std::size_t n = numel(shape);
  const bool a_scalar = a.size() == 1 && n != 1;
  const bool b_scalar = b.size() == 1 && n != 1;
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return make(Tensor(std::move(shape), std::move(out)), op, {a, b},
              [pa, pb, a_scalar, b_scalar, da, db](Node& self) {
                const auto& g = self.grad;
                const auto& x = pa->value;
                const auto& y = pb->value;
                Tensor* ga = pa->requires_grad ? &pa->grad_buffer() : nullptr;
                Tensor* gb = pb->requires_grad ? &pb->grad_buffer() : nullptr;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double xi = x[a_scalar ? 0 : i];
                  const double yi = y[b_scalar ? 0 : i];
                  if (ga != nullptr) {
                    (*ga)[a_scalar ? 0 : i] += g[i] * da(xi, yi);
                  }
                  if (gb != nullptr) {
                    (*gb)[b_scalar ? 0 : i] += g[i] * db(xi, yi);
                  }
                }
              });
}

template <typename F, typename D>
Var unary(const Var& a, const char* op, F f, D d) {
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f(av[i]);
  }
  Node* pa = a.get();
  return make(Tensor(a.shape(), std::move(out)), op, {a}, [pa, d](Node& self) {
    const auto& g = self.grad;
    auto& buf = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      buf[i] += g[i] * d(pa->value[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---- elementwise ----------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var neg(const Var& a) {
  return detail::unary(
      a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// |x|; subgradient 0 at x = 0.
inline Var abs(const Var& a) {
  return detail::unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var exp(const Var& a) {
  return detail::unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// Natural log. Every input must be strictly positive.
inline Var log(const Var& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a.value()[i] > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(a.value()[i]) +
                        " at index " + std::to_string(i));
    }
  }
  return detail::unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

/// Clamps into [lo, hi]; the gradient is zero where the clamp is active.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var add(const Var& a, double b) { return add(a, constant(b)); }
inline Var mul(const Var& a, double b) { return mul(a, constant(b)); }
inline Var sub(double a, const Var& b) { return sub(constant(a), b); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double b) { return add(a, b); }
inline Var operator*(const Var& a, double b) { return mul(a, b); }
inline Var operator*(double a, const Var& b) { return mul(b, a); }
inline Var operator-(double a, const Var& b) { return sub(a, b); }

// ---- linear algebra -------------------------------------------------------

/// a[m x k] * b[k x n] -> [m x n].
inline Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] += aip * bv[p * n + j];
      }
    }
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return detail::make(Tensor({m, n}, std::move(out)), "matmul", {a, b},
                      [pa, pb, m, k, n](Node& self) {
                        const auto& g = self.grad;
                        if (pa->requires_grad) {
                          auto& ga = pa->grad_buffer();  // g * b^T
                          for (std::size_t i = 0; i < m; ++i) {
                            for (std::size_t p = 0; p < k; ++p) {
                              double acc = 0.0;
                              for (std::size_t j = 0; j < n; ++j) {
                                acc += g[i * n + j] * pb->value[p * n + j];
                              }
                              ga[i * k + p] += acc;
                            }
                          }
                        }
                        if (pb->requires_grad) {
                          auto& gb = pb->grad_buffer();  // a^T * g
                          for (std::size_t i = 0; i < m; ++i) {
                            for (std::size_t p = 0; p < k; ++p) {
                              const double aip = pa->value[i * k + p];
                              for (std::size_t j = 0; j < n; ++j) {
                                gb[p * n + j] += aip * g[i * n + j];
                              }
                            }
                          }
                        }
                      });
}

// ---- reductions and reshaping --------------------------------------------

inline Var sum(const Var& a) {
  const auto& v = a.value().values();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  Node* pa = a.get();
  return detail::make(Tensor::scalar(total), "sum", {a}, [pa](Node& self) {
    const double g = self.grad[0];
    auto& buf = pa->grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf[i] += g;
    }
  });
}

inline Var mean(const Var& a) {
  if (a.size() == 0) {
    throw ArgumentError("mean of empty tensor");
  }
  return mul(sum(a), 1.0 / static_cast<double>(a.size()));
}

inline Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Node* pa = a.get();
  return detail::make(Tensor(std::move(shape), a.value().data()), "reshape", {a},
                      [pa](Node& self) { pa->accumulate(self.grad.values()); });
}

/// Flattens and concatenates.
inline Var concat(const std::vector<Var>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) {
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  }
  std::vector<Node*> raw;
  raw.reserve(parts.size());
  for (const auto& p : parts) {
    raw.push_back(p.get());
  }
  return detail::make(Tensor::vector(std::move(out)), "concat", parts, [raw](Node& self) {
    std::size_t offset = 0;
    for (Node* p : raw) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        p->accumulate(self.grad.values().subspan(offset, n));
      }
      offset += n;
    }
  });
}

/// One-element nodes -> vector [n].
inline Var stack(const std::vector<Var>& scalars) {
  for (const auto& s : scalars) {
    if (s.size() != 1) {
      throw DimensionError("stack: expected one-element inputs, got " + to_string(s.shape()));
    }
  }
  return concat(scalars);
}

/// Element i of a tensor (flat index), as a [1] node.
inline Var element(const Var& a, std::size_t index) {
  if (index >= a.size()) {
    throw ArgumentError("element: index " + std::to_string(index) + " out of range for " +
                        to_string(a.shape()));
  }
  Node* pa = a.get();
  return detail::make(Tensor::scalar(a.value()[index]), "element", {a}, [pa, index](Node& self) {
    pa->grad_buffer()[index] += self.grad[0];
  });
}

/// Flat range [begin, end) as a vector node.
inline Var slice(const Var& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.size()) {
    throw ArgumentError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") out of range for " + to_string(a.shape()));
  }
  const auto& v = a.value().data();
  Node* pa = a.get();
  return detail::make(
      Tensor::vector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                                         v.begin() + static_cast<std::ptrdiff_t>(end))),
      "slice", {a}, [pa, begin](Node& self) {
        auto& buf = pa->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          buf[begin + i] += self.grad[i];
        }
      });
}

/// Flat elements at `indices` (repeats allowed) as a vector node.
inline Var gather(const Var& a, std::vector<std::size_t> indices) {
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.size()) {
      throw ArgumentError("gather: index " + std::to_string(indices[i]) + " out of range for " +
                          to_string(a.shape()));
    }
    out[i] = a.value()[indices[i]];
  }
  Node* pa = a.get();
  return detail::make(Tensor::vector(std::move(out)), "gather", {a},
                      [pa, indices = std::move(indices)](Node& self) {
                        auto& buf = pa->grad_buffer();
                        for (std::size_t i = 0; i < indices.size(); ++i) {
                          buf[indices[i]] += self.grad[i];
                        }
                      });
}

/// Mean of the rows of `table` [V x d] selected by `ids`; zero vector when `ids` is empty.
inline Var embedding_mean(const Var& table, std::span<const std::uint32_t> ids) {
  if (table.shape().size() != 2) {
    throw DimensionError("embedding_mean: table must be 2-D, got " + to_string(table.shape()));
  }
  const std::size_t rows = table.shape()[0];
  const std::size_t d = table.shape()[1];
  std::vector<double> out(d, 0.0);
  const auto& tv = table.value();
  for (auto id : ids) {
    if (id >= rows) {
      throw ArgumentError("embedding_mean: id " + std::to_string(id) + " >= " +
                          std::to_string(rows));
    }
    for (std::size_t j = 0; j < d; ++j) {
      out[j] += tv[id * d + j];
    }
  }
  const double scale = ids.empty() ? 0.0 : 1.0 / static_cast<double>(ids.size());
  for (auto& x : out) {
    x *= scale;
  }
  Node* pt = table.get();
  std::vector<std::uint32_t> kept(ids.begin(), ids.end());
  return detail::make(Tensor::vector(std::move(out)), "embedding_mean", {table},
                      [pt, kept = std::move(kept), scale, d](Node& self) {
                        if (kept.empty()) {
                          return;
                        }
                        auto& buf = pt->grad_buffer();
                        for (auto id : kept) {
                          for (std::size_t j = 0; j < d; ++j) {
                            buf[id * d + j] += scale * self.grad[j];
                          }
                        }
                      });
}

// ---- softmax --------------------------------------------------------------

/// exp(x_j) / sum_k exp(x_k) over a flat vector, with max subtraction.
inline Var softmax(const Var& logits) {
  const std::size_t n = logits.size();
  if (n == 0) {
    throw ArgumentError("softmax of empty input");
  }
  const auto& x = logits.value().data();
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> out(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - peak);
    z += out[i];
  }
  for (auto& p : out) {
    p /= z;
  }
  Node* px = logits.get();
  return detail::make(Tensor::vector(std::move(out)), "softmax", {logits}, [px](Node& self) {
    // dx_i = p_i * (g_i - sum_j g_j p_j)
    const auto& p = self.value;
    const auto& g = self.grad;
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      dot += g[i] * p[i];
    }
    auto& buf = px->grad_buffer();
    for (std::size_t i = 0; i < p.size(); ++i) {
      buf[i] += p[i] * (g[i] - dot);
    }
  });
}

// ---- backward ---------------------------------------------------------------

/// Accumulates d(root)/d(node) into every reachable requires_grad node, then
/// releases the interior graph. Leaves keep their gradients; call
/// `Var::zero_grad()` on them to start over.
inline void backward(const Var& root) {
  if (root.size() != 1) {
    throw ArgumentError("backward: root must be a scalar, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) {
    return;
  }
  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.get()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->has_grad()) {
      node->backward(*node);
    }
  }
  for (Node* node : order) {
    if (!node->parents.empty()) {
      node->backward = nullptr;
      node->parents.clear();
    }
  }
}

}  // namespace sir::nd
