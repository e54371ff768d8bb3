#pragma once
// Dense row-major matrix with reverse-mode gradient recording.
//
// Every Tensor is rank 2 (rows x cols); vectors are 1 x n. A Tensor is a
// cheap handle onto a graph node: copies share the node, ops never mutate
// their inputs and always return a fresh node. Gradients are only recorded
// while grad mode is enabled on the calling thread (see NoGradGuard).

#include <algorithm>
#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <fmt/format.h>

namespace astreg::nn {

#ifdef ASTREG_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> value;
  std::vector<Real> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::vector<Real>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real{0});
    return grad;
  }
};

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : node_(std::make_shared<detail::Node>()) {
    node_->rows = rows;
    node_->cols = cols;
    node_->value.assign(rows * cols, fill);
  }

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<Real> values) {
    if (values.size() != rows * cols) {
      throw ShapeError(fmt::format("Tensor::from: {} values for shape ({}, {})", values.size(), rows, cols));
    }
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->rows = rows;
    t.node_->cols = cols;
    t.node_->value = std::move(values);
    return t;
  }

  static Tensor row(std::vector<Real> values) {
    const auto n = values.size();
    return from(1, n, std::move(values));
  }

  static Tensor scalar(Real v) { return from(1, 1, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {node_->rows, node_->cols}; }
  std::string shape_str() const { return fmt::format("({}, {})", rows(), cols()); }

  std::span<const Real> values() const { return node_->value; }
  Real operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  Real item() const {
    if (size() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", shape_str()));
    return node_->value[0];
  }
  std::vector<Real> row_values(std::size_t r) const {
    auto first = node_->value.begin() + static_cast<std::ptrdiff_t>(r * cols());
    return {first, first + static_cast<std::ptrdiff_t>(cols())};
  }

  /// Gradient accumulated by the last backward(); empty until one ran.
  std::span<const Real> grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Back-propagates from this scalar, accumulating into every reachable leaf.
  void backward() const {
    if (size() != 1) throw ShapeError(fmt::format("backward() needs a scalar, got {}", shape_str()));
    if (!node_->requires_grad) return;
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad()[0] += Real{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

  // Leaf access used by Parameter, the optimizer and finite differences.
  std::span<Real> mutable_values() { return node_->value; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real{0});
  }

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const {
    Tensor t = from(rows(), cols(), node_->value);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds the output node of an op. Parents are only linked when grad mode is
  /// on and at least one input needs a gradient.
  static Tensor make_result(std::size_t rows, std::size_t cols, std::vector<Real> values,
                            std::initializer_list<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn) {
    Tensor out = from(rows, cols, std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

  static Tensor make_result(std::size_t rows, std::size_t cols, std::vector<Real> values,
                            const std::vector<Tensor>& inputs,
                            std::function<void(detail::Node&)> backward_fn) {
    Tensor out = from(rows, cols, std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// A named trainable leaf. Copies are handles onto the same storage.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value) : name_(std::move(name)), tensor_(std::move(value)) {
    tensor_.set_requires_grad(true);
  }

  const std::string& name() const { return name_; }
  const Tensor& tensor() const { return tensor_; }
  std::size_t rows() const { return tensor_.rows(); }
  std::size_t cols() const { return tensor_.cols(); }
  std::size_t size() const { return tensor_.size(); }
  std::span<Real> values() { return tensor_.mutable_values(); }
  std::span<const Real> values() const { return tensor_.values(); }
  std::span<Real> grad() { return tensor_.mutable_grad(); }
  void zero_grad() { tensor_.zero_grad(); }

  operator const Tensor&() const { return tensor_; }  // NOLINT(google-explicit-constructor)

 private:
  std::string name_;
  Tensor tensor_;
};

using ParameterList = std::vector<Parameter>;

inline void zero_grads(ParameterList& params) {
  for (auto& p : params) p.zero_grad();
}

inline std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

/// Copies values between structurally identical parameter lists.
inline void copy_parameter_values(const ParameterList& from, ParameterList& to) {
  if (from.size() != to.size()) {
    throw ShapeError(fmt::format("parameter count mismatch: {} vs {}", from.size(), to.size()));
  }
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor().shape() != to[i].tensor().shape()) {
      throw ShapeError(fmt::format("parameter {} shape {} does not match {}", to[i].name(),
                                   from[i].tensor().shape_str(), to[i].tensor().shape_str()));
    }
    auto src = from[i].values();
    std::copy(src.begin(), src.end(), to[i].values().begin());
  }
}

}  // namespace astreg::nn
