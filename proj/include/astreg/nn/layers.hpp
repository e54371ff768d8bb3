#pragma once
// Building blocks shared by every model: initialisers, linear maps, learned
// token/position embeddings, layer norm, multi-head attention, the
// position-wise feed-forward network and batch norm.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "astreg/nn/ops.hpp"

namespace astreg::nn {

using Rng = std::mt19937_64;

/// Forward-pass mode. Dropout and batch statistics only apply while training.
struct RunContext {
  bool training = false;
  Rng* rng = nullptr;
};

inline Parameter uniform_param(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return {std::move(name), Tensor::from(rows, cols, std::move(v))};
}

inline Parameter normal_param(std::string name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return {std::move(name), Tensor::from(rows, cols, std::move(v))};
}

inline Parameter filled_param(std::string name, std::size_t rows, std::size_t cols, Real fill) {
  return {std::move(name), Tensor(rows, cols, fill)};
}

/// y = x W (+ b), W is in x out.
struct Linear {
  Parameter weight;
  Parameter bias;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true)
      : weight(uniform_param(name + ".weight", in, out, in, rng)), has_bias(with_bias) {
    if (has_bias) bias = filled_param(name + ".bias", 1, out, Real{0});
  }

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  Tensor operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return has_bias ? add_row(y, bias) : y;
  }

  void collect(ParameterList& out) const {
    out.push_back(weight);
    if (has_bias) out.push_back(bias);
  }
};

/// Learned token table plus learned absolute positions; row i of the output
/// is token_table[ids[i]] + position_table[i].
struct PositionalEmbedding {
  Parameter tokens;
  Parameter positions;

  PositionalEmbedding() = default;
  PositionalEmbedding(const std::string& name, std::size_t vocab, std::size_t max_len, std::size_t dim, Rng& rng,
                      bool sinusoidal = false)
      : tokens(normal_param(name + ".tokens", vocab, dim, 0.02, rng)),
        positions(normal_param(name + ".positions", max_len, dim, 0.02, rng)) {
    if (sinusoidal) {
      auto v = positions.values();
      for (std::size_t p = 0; p < max_len; ++p)
        for (std::size_t i = 0; i < dim; ++i) {
          const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
          v[p * dim + i] = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
  }

  std::size_t max_len() const { return positions.rows(); }

  Tensor operator()(std::span<const std::size_t> ids) const {
    if (ids.size() > max_len()) {
      spdlog::warn("sequence of length {} truncated to {}", ids.size(), max_len());
      ids = ids.first(max_len());
    }
    return add(gather_rows(tokens, ids), slice_rows(positions, 0, ids.size()));
  }

  void collect(ParameterList& out) const {
    out.push_back(tokens);
    out.push_back(positions);
  }
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;
  Real eps = Real{1e-5};

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim)
      : gain(filled_param(name + ".gain", 1, dim, Real{1})), bias(filled_param(name + ".bias", 1, dim, Real{0})) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }

  void collect(ParameterList& out) const {
    out.push_back(gain);
    out.push_back(bias);
  }
};

/// Scaled dot-product attention with h heads of width d/h.
struct MultiHeadAttention {
  std::size_t heads = 1;
  std::size_t dim = 0;
  Parameter w_query;
  Parameter w_key;
  Parameter w_value;
  Parameter w_out;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t model_dim, std::size_t num_heads, Rng& rng)
      : heads(num_heads), dim(model_dim) {
    if (num_heads == 0 || model_dim % num_heads != 0) {
      throw std::invalid_argument(fmt::format("model dim {} is not divisible by {} heads", model_dim, num_heads));
    }
    w_query = uniform_param(name + ".w_query", dim, dim, dim, rng);
    w_key = uniform_param(name + ".w_key", dim, dim, dim, rng);
    w_value = uniform_param(name + ".w_value", dim, dim, dim, rng);
    w_out = uniform_param(name + ".w_out", dim, dim, dim, rng);
  }

  std::size_t head_dim() const { return dim / heads; }

  /// Queries come from `queries_in`, keys and values from `keys_values_in`.
  /// Optional per-head attention matrices are returned through `weights_out`.
  Tensor operator()(const Tensor& queries_in, const Tensor& keys_values_in, std::span<const std::uint8_t> key_mask = {},
                    std::vector<Tensor>* weights_out = nullptr) const {
    if (queries_in.cols() != dim || keys_values_in.cols() != dim) {
      throw ShapeError(fmt::format("attention: inputs {} / {} for model dim {}", queries_in.shape_str(),
                                   keys_values_in.shape_str(), dim));
    }
    const Tensor q = matmul(queries_in, w_query);
    const Tensor k = matmul(keys_values_in, w_key);
    const Tensor v = matmul(keys_values_in, w_value);
    const std::size_t dk = head_dim();
    const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(dk));
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor qh = heads == 1 ? q : slice_cols(q, h * dk, dk);
      const Tensor kh = heads == 1 ? k : slice_cols(k, h * dk, dk);
      const Tensor vh = heads == 1 ? v : slice_cols(v, h * dk, dk);
      Tensor weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_mask);
      if (weights_out) weights_out->push_back(weights);
      head_out.push_back(matmul(weights, vh));
    }
    const Tensor merged = heads == 1 ? head_out.front() : concat_cols(head_out);
    return matmul(merged, w_out);
  }

  void collect(ParameterList& out) const {
    out.push_back(w_query);
    out.push_back(w_key);
    out.push_back(w_value);
    out.push_back(w_out);
  }
};

/// max(0, x W1 + b1) W2 + b2
struct FeedForward {
  Linear inner;
  Linear outer;

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng)
      : inner(name + ".inner", dim, hidden, rng), outer(name + ".outer", hidden, dim, rng) {}

  Tensor operator()(const Tensor& x) const { return outer(relu(inner(x))); }

  void collect(ParameterList& out) const {
    inner.collect(out);
    outer.collect(out);
  }
};

/// Batch norm over rows with running statistics (momentum 0.1) for evaluation.
struct BatchNorm {
  Parameter gain;
  Parameter bias;
  Parameter running_mean;  // buffers, never optimised
  Parameter running_var;
  Real momentum = Real{0.1};
  Real eps = Real{1e-5};

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t dim)
      : gain(filled_param(name + ".gain", 1, dim, Real{1})),
        bias(filled_param(name + ".bias", 1, dim, Real{0})),
        running_mean(filled_param(name + ".running_mean", 1, dim, Real{0})),
        running_var(filled_param(name + ".running_var", 1, dim, Real{1})) {}

  Tensor operator()(const Tensor& x, const RunContext& ctx) {
    if (ctx.training && x.rows() > 1) {
      std::vector<Real> mu, var;
      Tensor y = batch_norm_train(x, gain, bias, eps, &mu, &var);
      const Real n = static_cast<Real>(x.rows());
      auto rm = running_mean.values();
      auto rv = running_var.values();
      for (std::size_t j = 0; j < mu.size(); ++j) {
        rm[j] = (1 - momentum) * rm[j] + momentum * mu[j];
        rv[j] = (1 - momentum) * rv[j] + momentum * var[j] * n / (n - 1);
      }
      return y;
    }
    const std::size_t c = running_mean.size();
    auto rm = std::as_const(running_mean).values();
    auto rv = std::as_const(running_var).values();
    std::vector<Real> shift(c), scale_v(c);
    for (std::size_t j = 0; j < c; ++j) {
      scale_v[j] = Real{1} / std::sqrt(rv[j] + eps);
      shift[j] = -rm[j] * scale_v[j];
    }
    Tensor normalised = add_row(mul_row(x, constant(1, c, std::move(scale_v))), constant(1, c, std::move(shift)));
    return add_row(mul_row(normalised, gain), bias);
  }

  void collect(ParameterList& out) const {
    out.push_back(gain);
    out.push_back(bias);
  }

  void collect_buffers(ParameterList& out) const {
    out.push_back(running_mean);
    out.push_back(running_var);
  }
};

}  // namespace astreg::nn
