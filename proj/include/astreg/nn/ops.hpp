#pragma once
// Differentiable op set. Every op validates shapes, computes its value eagerly
// and records a closure that maps the output gradient onto its inputs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "astreg/nn/tensor.hpp"

namespace astreg::nn {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape_str(), b.shape_str()));
  }
}

inline std::vector<Real>* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real{0}) continue;
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real{0}) continue;
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<Real> out(a.size());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(a.rows(), a.cols(), std::move(out), {a}, [df](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace detail

/// Constant (non-trainable) tensor.
inline Tensor constant(std::size_t rows, std::size_t cols, std::vector<Real> values) {
  return Tensor::from(rows, cols, std::move(values));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: inner dimensions differ {} x {}", a.shape_str(), b.shape_str()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<Real> out(m * n, Real{0});
  detail::gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return Tensor::make_result(m, n, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_of(self, 0)) detail::gemm_nt(self.grad.data(), bv.data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(self, 1)) detail::gemm_tn(av.data(), self.grad.data(), gb->data(), m, k, n);
  });
}

/// a * b^T without materialising the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_nt: inner dimensions differ {} x {}^T", a.shape_str(), b.shape_str()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<Real> out(m * n, Real{0});
  detail::gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return Tensor::make_result(m, n, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    // dA = dC * B ; dB = dC^T * A
    if (auto* ga = detail::grad_of(self, 0)) detail::gemm_nn(self.grad.data(), bv.data(), ga->data(), m, n, k);
    if (auto* gb = detail::grad_of(self, 1)) detail::gemm_tn(self.grad.data(), av.data(), gb->data(), m, n, k);
  });
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(r * c);
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return Tensor::make_result(c, r, std::move(out), {a}, [r, c](detail::Node& self) {
    if (auto* ga = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* g = detail::grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.rows(), a.cols(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * y[i];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * x[i];
  });
}

/// Adds a 1 x c row to every row of a.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError(fmt::format("add_row: cannot broadcast {} onto {}", row.shape_str(), a.shape_str()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(a.size());
  auto x = a.values(), b = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + b[j];
  return Tensor::make_result(r, c, std::move(out), {a, row}, [r, c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j];
  });
}

/// Multiplies every row of a elementwise by a 1 x c row.
inline Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError(fmt::format("mul_row: cannot broadcast {} onto {}", row.shape_str(), a.shape_str()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(a.size());
  auto x = a.values(), b = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * b[j];
  return Tensor::make_result(r, c, std::move(out), {a, row}, [r, c](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& b = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] * b[j];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j] * x[i * c + j];
  });
}

/// Multiplies row i of a by col(i, 0).
inline Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError(fmt::format("mul_col: cannot broadcast {} onto {}", col.shape_str(), a.shape_str()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(a.size());
  auto x = a.values(), s = col.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * s[i];
  return Tensor::make_result(r, c, std::move(out), {a, col}, [r, c](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& s = self.parents[1]->value;
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] * s[i];
    if (auto* g = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i] += self.grad[i * c + j] * x[i * c + j];
  });
}

/// Multiplies a by a 1 x 1 tensor (differentiable in both).
inline Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError(fmt::format("mul_scalar: {} is not a scalar", s.shape_str()));
  const Real k = s.item();
  std::vector<Real> out(a.size());
  auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * k;
  return Tensor::make_result(a.rows(), a.cols(), std::move(out), {a, s}, [](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    const Real k = self.parents[1]->value[0];
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += self.grad[i] * k;
    if (auto* g = detail::grad_of(self, 1)) {
      Real acc = 0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += self.grad[i] * x[i];
      (*g)[0] += acc;
    }
  });
}

inline Tensor scale(const Tensor& a, Real k) {
  return detail::unary(a, [k](Real x) { return x * k; }, [k](Real, Real) { return k; });
}

inline Tensor add_scalar(const Tensor& a, Real k) {
  return detail::unary(a, [k](Real x) { return x + k; }, [](Real, Real) { return Real{1}; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real{1} - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](Real x) { return x > 0 ? x : Real{0}; }, [](Real x, Real) { return x > 0 ? Real{1} : Real{0}; });
}

inline Tensor leaky_relu(const Tensor& a, Real slope) {
  return detail::unary(
      a, [slope](Real x) { return x > 0 ? x : slope * x; },
      [slope](Real x, Real) { return x > 0 ? Real{1} : slope; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

inline Tensor abs(const Tensor& a) {
  return detail::unary(
      a, [](Real x) { return std::abs(x); }, [](Real x, Real) { return x > 0 ? Real{1} : (x < 0 ? Real{-1} : Real{0}); });
}

/// Row-wise softmax. Columns with key_mask[j] == 0 receive exactly zero weight.
inline Tensor softmax_rows(const Tensor& a, std::span<const std::uint8_t> key_mask = {}) {
  const std::size_t r = a.rows(), c = a.cols();
  if (!key_mask.empty() && key_mask.size() != c) {
    throw ShapeError(fmt::format("softmax_rows: mask of length {} for {} columns", key_mask.size(), c));
  }
  auto keep = [&key_mask](std::size_t j) { return key_mask.empty() || key_mask[j] != 0; };
  bool any = false;
  for (std::size_t j = 0; j < c; ++j) any = any || keep(j);
  if (!any) throw std::invalid_argument("softmax_rows: empty attention support (every key is masked)");

  std::vector<Real> out(a.size(), Real{0});
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (keep(j)) mx = std::max(mx, x[i * c + j]);
    Real sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!keep(j)) continue;
      out[i * c + j] = std::exp(x[i * c + j] - mx);
      sum += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  return Tensor::make_result(r, c, std::move(out), {a}, [r, c](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        (*g)[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError(fmt::format("concat_cols: row mismatch {} vs {}", p.shape_str(), parts.front().shape_str()));
    c += p.cols();
  }
  std::vector<Real> out(r * c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    auto v = p.values();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * p.cols()), p.cols(),
                  out.begin() + static_cast<std::ptrdiff_t>(i * c + off));
    off += p.cols();
  }
  return Tensor::make_result(r, c, std::move(out), parts, [r, c, offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto* g = detail::grad_of(self, k);
      if (!g) continue;
      const std::size_t pc = self.parents[k]->cols;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pc; ++j) (*g)[i * pc + j] += self.grad[i * c + offsets[k] + j];
    }
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError(fmt::format("concat_rows: column mismatch {} vs {}", p.shape_str(), parts.front().shape_str()));
    r += p.rows();
  }
  std::vector<Real> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::make_result(r, c, std::move(out), parts, [](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->value.size();
      if (auto* g = detail::grad_of(self, k))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[off + i];
      off += n;
    }
  });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw ShapeError(fmt::format("slice_rows: [{}, {}) out of range for {}", begin, begin + count, a.shape_str()));
  }
  const std::size_t c = a.cols();
  auto v = a.values();
  std::vector<Real> out(v.begin() + static_cast<std::ptrdiff_t>(begin * c),
                        v.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return Tensor::make_result(count, c, std::move(out), {a}, [begin, c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * c + i] += self.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw ShapeError(fmt::format("slice_cols: [{}, {}) out of range for {}", begin, begin + count, a.shape_str()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(r * count);
  auto v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * c + begin + j];
  return Tensor::make_result(r, count, std::move(out), {a}, [r, c, begin, count](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) (*g)[i * c + begin + j] += self.grad[i * count + j];
  });
}

/// out[i] = a[index[i]]; repeated indices accumulate gradient.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t c = a.cols();
  std::vector<Real> out(index.size() * c);
  auto v = a.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) {
      throw ShapeError(fmt::format("gather_rows: index {} out of range for {}", index[i], a.shape_str()));
    }
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(index[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::make_result(index.size(), c, std::move(out), {a}, [idx = std::move(idx), c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[idx[i] * c + j] += self.grad[i * c + j];
  });
}

inline Tensor sum(const Tensor& a) {
  Real s = 0;
  for (Real x : a.values()) s += x;
  return Tensor::make_result(1, 1, {s}, {a}, [](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (auto& x : *g) x += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), Real{1} / static_cast<Real>(a.size())); }

/// Column means over rows: (r x c) -> (1 x c).
inline Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> out(c, Real{0});
  auto v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += v[i * c + j];
  for (auto& x : out) x /= static_cast<Real>(r);
  return Tensor::make_result(1, c, std::move(out), {a}, [r, c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j] / static_cast<Real>(r);
  });
}

/// Column maxima over rows: (r x c) -> (1 x c). Ties route gradient to the first maximum.
inline Tensor max_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ShapeError("max_rows: no rows");
  std::vector<Real> out(c);
  std::vector<std::size_t> arg(c, 0);
  auto v = a.values();
  for (std::size_t j = 0; j < c; ++j) {
    out[j] = v[j];
    for (std::size_t i = 1; i < r; ++i)
      if (v[i * c + j] > out[j]) {
        out[j] = v[i * c + j];
        arg[j] = i;
      }
  }
  return Tensor::make_result(1, c, std::move(out), {a}, [arg = std::move(arg), c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t j = 0; j < c; ++j) (*g)[arg[j] * c + j] += self.grad[j];
  });
}

/// out[segment[i]] += a[i] over rows.
inline Tensor segment_sum(const Tensor& a, std::span<const std::size_t> segment, std::size_t num_segments) {
  if (segment.size() != a.rows()) {
    throw ShapeError(fmt::format("segment_sum: {} segment ids for {}", segment.size(), a.shape_str()));
  }
  const std::size_t c = a.cols();
  std::vector<Real> out(num_segments * c, Real{0});
  auto v = a.values();
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] >= num_segments) throw ShapeError("segment_sum: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) out[segment[i] * c + j] += v[i * c + j];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return Tensor::make_result(num_segments, c, std::move(out), {a}, [seg = std::move(seg), c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < seg.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[seg[i] * c + j];
  });
}

inline Tensor segment_mean(const Tensor& a, std::span<const std::size_t> segment, std::size_t num_segments) {
  std::vector<Real> inv(num_segments, Real{0});
  for (auto s : segment) inv.at(s) += 1;
  for (auto& x : inv) x = x > 0 ? Real{1} / x : Real{0};
  return mul_col(segment_sum(a, segment, num_segments), constant(num_segments, 1, std::move(inv)));
}

/// Per-segment column maxima. Empty segments yield zeros.
inline Tensor segment_max(const Tensor& a, std::span<const std::size_t> segment, std::size_t num_segments) {
  if (segment.size() != a.rows()) throw ShapeError("segment_max: segment ids do not match rows");
  const std::size_t c = a.cols();
  std::vector<Real> out(num_segments * c, -std::numeric_limits<Real>::infinity());
  std::vector<std::size_t> arg(num_segments * c, static_cast<std::size_t>(-1));
  auto v = a.values();
  for (std::size_t i = 0; i < segment.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t o = segment[i] * c + j;
      if (arg[o] == static_cast<std::size_t>(-1) || v[i * c + j] > out[o]) {
        out[o] = v[i * c + j];
        arg[o] = i;
      }
    }
  for (std::size_t o = 0; o < out.size(); ++o)
    if (arg[o] == static_cast<std::size_t>(-1)) out[o] = 0;
  return Tensor::make_result(num_segments, c, std::move(out), {a}, [arg = std::move(arg), c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t o = 0; o < arg.size(); ++o)
        if (arg[o] != static_cast<std::size_t>(-1)) (*g)[arg[o] * c + o % c] += self.grad[o];
  });
}

/// Softmax of an (E x 1) score column within each segment.
inline Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t num_segments) {
  if (scores.cols() != 1 || segment.size() != scores.rows()) {
    throw ShapeError(fmt::format("segment_softmax: expected ({}, 1) scores, got {}", segment.size(), scores.shape_str()));
  }
  const std::size_t e = scores.rows();
  std::vector<Real> mx(num_segments, -std::numeric_limits<Real>::infinity());
  auto v = scores.values();
  for (std::size_t i = 0; i < e; ++i) mx.at(segment[i]) = std::max(mx[segment[i]], v[i]);
  std::vector<Real> out(e), denom(num_segments, Real{0});
  for (std::size_t i = 0; i < e; ++i) {
    out[i] = std::exp(v[i] - mx[segment[i]]);
    denom[segment[i]] += out[i];
  }
  for (std::size_t i = 0; i < e; ++i) out[i] /= denom[segment[i]];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return Tensor::make_result(e, 1, std::move(out), {scores}, [seg = std::move(seg), num_segments](detail::Node& self) {
    auto* g = detail::grad_of(self, 0);
    if (!g) return;
    std::vector<Real> dot(num_segments, Real{0});
    for (std::size_t i = 0; i < seg.size(); ++i) dot[seg[i]] += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < seg.size(); ++i) (*g)[i] += self.value[i] * (self.grad[i] - dot[seg[i]]);
  });
}

/// Constant sparse coefficient matrix in coordinate form.
struct SparseCoefficients {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row;
  std::vector<std::size_t> col;
  std::vector<Real> weight;

  void add(std::size_t r, std::size_t c, Real w) {
    row.push_back(r);
    col.push_back(c);
    weight.push_back(w);
  }
};

/// S * a for constant sparse S.
inline Tensor spmm(const SparseCoefficients& s, const Tensor& a) {
  if (s.cols != a.rows()) {
    throw ShapeError(fmt::format("spmm: sparse ({}, {}) times {}", s.rows, s.cols, a.shape_str()));
  }
  const std::size_t c = a.cols();
  std::vector<Real> out(s.rows * c, Real{0});
  auto v = a.values();
  for (std::size_t k = 0; k < s.weight.size(); ++k)
    for (std::size_t j = 0; j < c; ++j) out[s.row[k] * c + j] += s.weight[k] * v[s.col[k] * c + j];
  return Tensor::make_result(s.rows, c, std::move(out), {a}, [s, c](detail::Node& self) {
    if (auto* g = detail::grad_of(self, 0))
      for (std::size_t k = 0; k < s.weight.size(); ++k)
        for (std::size_t j = 0; j < c; ++j) (*g)[s.col[k] * c + j] += s.weight[k] * self.grad[s.row[k] * c + j];
  });
}

/// Per-row normalisation: (x - mean) / sqrt(var + eps) * gain + bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, Real eps = Real{1e-5}) {
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.shape() != std::array<std::size_t, 2>{1, c} || bias.shape() != gain.shape()) {
    throw ShapeError(fmt::format("layer_norm: gain {} / bias {} for input {}", gain.shape_str(), bias.shape_str(), a.shape_str()));
  }
  std::vector<Real> xhat(a.size()), inv_std(r), out(a.size());
  auto x = a.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < r; ++i) {
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (x[i * c + j] - mu) * (x[i * c + j] - mu);
    var /= static_cast<Real>(c);
    inv_std[i] = Real{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return Tensor::make_result(r, c, std::move(out), {a, gain, bias},
                             [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
    const auto& gv = self.parents[1]->value;
    if (auto* gg = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gg)[j] += self.grad[i * c + j] * xhat[i * c + j];
    if (auto* gb = detail::grad_of(self, 2))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += self.grad[i * c + j];
    if (auto* ga = detail::grad_of(self, 0)) {
      const Real n = static_cast<Real>(c);
      for (std::size_t i = 0; i < r; ++i) {
        Real sum_d = 0, sum_dx = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = self.grad[i * c + j] * gv[j];
          sum_d += d;
          sum_dx += d * xhat[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = self.grad[i * c + j] * gv[j];
          (*ga)[i * c + j] += inv_std[i] * (d - sum_d / n - xhat[i * c + j] * sum_dx / n);
        }
      }
    }
  });
}

/// Column normalisation with batch statistics (biased variance), then affine.
/// The batch mean and variance are written to the optional outputs.
inline Tensor batch_norm_train(const Tensor& a, const Tensor& gain, const Tensor& bias, Real eps,
                               std::vector<Real>* batch_mean = nullptr, std::vector<Real>* batch_var = nullptr) {
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.shape() != std::array<std::size_t, 2>{1, c} || bias.shape() != gain.shape()) {
    throw ShapeError(fmt::format("batch_norm: gain {} / bias {} for input {}", gain.shape_str(), bias.shape_str(), a.shape_str()));
  }
  std::vector<Real> mu(c, Real{0}), var(c, Real{0}), inv_std(c), xhat(a.size()), out(a.size());
  auto x = a.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) mu[j] += x[i * c + j];
  for (auto& m : mu) m /= static_cast<Real>(r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) var[j] += (x[i * c + j] - mu[j]) * (x[i * c + j] - mu[j]);
  for (std::size_t j = 0; j < c; ++j) {
    var[j] /= static_cast<Real>(r);
    inv_std[j] = Real{1} / std::sqrt(var[j] + eps);
  }
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[i * c + j] - mu[j]) * inv_std[j];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return Tensor::make_result(r, c, std::move(out), {a, gain, bias},
                             [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
    const auto& gv = self.parents[1]->value;
    if (auto* gg = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gg)[j] += self.grad[i * c + j] * xhat[i * c + j];
    if (auto* gb = detail::grad_of(self, 2))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += self.grad[i * c + j];
    if (auto* ga = detail::grad_of(self, 0)) {
      const Real n = static_cast<Real>(r);
      std::vector<Real> sum_d(c, Real{0}), sum_dx(c, Real{0});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = self.grad[i * c + j] * gv[j];
          sum_d[j] += d;
          sum_dx[j] += d * xhat[i * c + j];
        }
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = self.grad[i * c + j] * gv[j];
          (*ga)[i * c + j] += inv_std[j] * (d - sum_d[j] / n - xhat[i * c + j] * sum_dx[j] / n);
        }
    }
  });
}

/// Inverted dropout; identity when rate == 0.
template <typename Rng>
Tensor dropout(const Tensor& a, Real rate, Rng& rng) {
  if (rate <= 0) return a;
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  std::vector<Real> mask(a.size());
  const Real k = Real{1} / (Real{1} - rate);
  for (auto& m : mask) m = keep(rng) ? k : Real{0};
  return mul(a, constant(a.rows(), a.cols(), std::move(mask)));
}

/// Mean squared error between an (n x 1) prediction column and targets.
inline Tensor mse_loss(const Tensor& pred, std::span<const Real> target) {
  if (pred.size() != target.size()) {
    throw ShapeError(fmt::format("mse_loss: {} predictions for {} targets", pred.size(), target.size()));
  }
  Tensor t = constant(pred.rows(), pred.cols(), std::vector<Real>(target.begin(), target.end()));
  return mean(square(sub(pred, t)));
}

inline bool all_finite(const Tensor& t) {
  for (Real x : t.values())
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace astreg::nn
