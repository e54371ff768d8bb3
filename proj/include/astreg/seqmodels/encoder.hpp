#pragma once
// Post-norm transformer encoder:
//   O' = LN(x + MHA(x, x, x)),  O = LN(O' + FFN(O'))

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "astreg/nn/layers.hpp"

namespace astreg::seqmodels {

using nn::Real;
using nn::RunContext;
using nn::Tensor;

struct EncoderBlock {
  nn::MultiHeadAttention attention;
  nn::LayerNorm norm1;
  nn::FeedForward ffn;
  nn::LayerNorm norm2;

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, std::size_t dim, std::size_t heads, std::size_t ff, nn::Rng& rng)
      : attention(name + ".attention", dim, heads, rng),
        norm1(name + ".norm1", dim),
        ffn(name + ".ffn", dim, ff, rng),
        norm2(name + ".norm2", dim) {}

  Tensor operator()(const Tensor& x, std::span<const std::uint8_t> mask, Real dropout, const RunContext& ctx) const {
    auto drop = [&](const Tensor& t) { return ctx.training && ctx.rng && dropout > 0 ? nn::dropout(t, dropout, *ctx.rng) : t; };
    const Tensor mid = norm1(nn::add(x, drop(attention(x, x, mask))));
    return norm2(nn::add(mid, drop(ffn(mid))));
  }

  void collect(nn::ParameterList& out) const {
    attention.collect(out);
    norm1.collect(out);
    ffn.collect(out);
    norm2.collect(out);
  }
};

/// Token + position embedding followed by `depth` encoder blocks.
struct EncoderStack {
  nn::PositionalEmbedding embedding;
  std::vector<EncoderBlock> blocks;
  Real dropout = Real{0.1};

  EncoderStack() = default;
  EncoderStack(const std::string& name, std::size_t vocab, std::size_t max_len, std::size_t dim, std::size_t heads,
               std::size_t depth, std::size_t ff, Real dropout_rate, nn::Rng& rng, bool sinusoidal = false)
      : embedding(name + ".embedding", vocab, max_len, dim, rng, sinusoidal), dropout(dropout_rate) {
    for (std::size_t b = 0; b < depth; ++b) blocks.emplace_back(fmt::format("{}.block{}", name, b), dim, heads, ff, rng);
  }

  std::size_t max_len() const { return embedding.max_len(); }

  /// `mask` (optional) marks real positions with 1 and padding with 0.
  Tensor operator()(std::span<const std::size_t> ids, std::span<const std::uint8_t> mask, const RunContext& ctx) const {
    if (ids.empty()) throw std::invalid_argument("encoder: empty input sequence");
    if (!mask.empty() && mask.size() != ids.size()) throw nn::ShapeError("encoder: mask length differs from input length");
    if (ids.size() > max_len()) {
      spdlog::warn("sequence of length {} truncated to {}", ids.size(), max_len());
      ids = ids.first(max_len());
      if (!mask.empty()) mask = mask.first(max_len());
    }
    Tensor x = embedding(ids);
    if (ctx.training && ctx.rng && dropout > 0) x = nn::dropout(x, dropout, *ctx.rng);
    for (const auto& block : blocks) x = block(x, mask, dropout, ctx);
    return x;
  }

  void collect(nn::ParameterList& out) const {
    embedding.collect(out);
    for (const auto& b : blocks) b.collect(out);
  }
};

}  // namespace astreg::seqmodels
