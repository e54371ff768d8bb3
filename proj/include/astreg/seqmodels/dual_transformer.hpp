#pragma once
// Two encoders (lexical tokens, AST node labels) fused by cross-attention with
// shared projections; the regression head reads the fused [CLS] row.

#include <memory>
#include <utility>
#include <vector>

#include "astreg/model.hpp"
#include "astreg/seqmodels/encoder.hpp"
#include "astreg/treedata/linearize.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::seqmodels {

using treedata::Vocabulary;

/// Shared W^Q/W^K/W^V/W^O with one add-and-norm per query side.
struct CrossAttention {
  nn::MultiHeadAttention attention;
  nn::LayerNorm ast_norm;
  nn::LayerNorm code_norm;

  CrossAttention() = default;
  CrossAttention(const std::string& name, std::size_t dim, std::size_t heads, nn::Rng& rng)
      : attention(name + ".attention", dim, heads, rng), ast_norm(name + ".ast_norm", dim), code_norm(name + ".code_norm", dim) {}

  void collect(nn::ParameterList& out) const {
    attention.collect(out);
    ast_norm.collect(out);
    code_norm.collect(out);
  }
};

struct CrossOutput {
  Tensor ast_fused;
  Tensor code_fused;
  std::vector<Tensor> ast_weights;   // per head, ast queries over code keys
  std::vector<Tensor> code_weights;  // per head, code queries over ast keys
};

/// ast_fused  = LN_a(O_ast  + cross(O_ast,  O_code)) when ast queries are enabled
/// code_fused = LN_c(O_code + cross(O_code, O_ast))  when code queries are enabled
/// A side whose queries are disabled passes through unchanged.
inline CrossOutput cross_attend(const Tensor& o_code, std::span<const std::uint8_t> code_mask, const Tensor& o_ast,
                                std::span<const std::uint8_t> ast_mask, const CrossAttention& cross,
                                CrossDirection direction = CrossDirection::bi) {
  if (o_code.cols() != o_ast.cols()) {
    throw nn::ShapeError(fmt::format("cross_attend: code {} and ast {} widths differ", o_code.shape_str(), o_ast.shape_str()));
  }
  CrossOutput out{o_ast, o_code, {}, {}};
  if (direction != CrossDirection::code2ast) {
    out.ast_fused = cross.ast_norm(nn::add(o_ast, cross.attention(o_ast, o_code, code_mask, &out.ast_weights)));
  }
  if (direction != CrossDirection::ast2code) {
    out.code_fused = cross.code_norm(nn::add(o_code, cross.attention(o_code, o_ast, ast_mask, &out.code_weights)));
  }
  return out;
}

struct DualInput {
  std::vector<std::size_t> tokens;
  std::vector<std::uint8_t> token_mask;  // empty means every position is real
  std::vector<std::size_t> ast;          // [CLS] followed by pre-order label ids
};

struct DualEncoded : Encoded {
  DualInput input;
};

class DualTransformer final : public Regressor {
 public:
  explicit DualTransformer(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  ModelKind kind() const override { return ModelKind::dual; }
  const ModelConfig& config() const override { return cfg_; }

  void prepare(const std::vector<SampleRecord>& train, std::uint64_t seed) override {
    tokens_ = treedata::build_vocab(train, treedata::VocabSource::tokens, cfg_.min_freq);
    labels_ = treedata::build_vocab(train, treedata::VocabSource::node_labels, cfg_.min_freq);
    init(seed);
  }

  void restore(const nlohmann::json& state) override {
    cfg_ = ModelConfig::from_json(state.at("config"));
    tokens_ = Vocabulary::from_json(state.at("tokens"));
    labels_ = Vocabulary::from_json(state.at("node_labels"));
    init(0);
  }

  nlohmann::json state() const override {
    return {{"config", cfg_.to_json()}, {"tokens", tokens_.to_json()}, {"node_labels", labels_.to_json()}};
  }

  const Vocabulary& token_vocab() const { return tokens_; }
  const Vocabulary& label_vocab() const { return labels_; }

  DualInput make_input(const SampleRecord& record) const {
    DualInput in;
    in.tokens = tokens_.encode(record.tokens);
    in.ast.push_back(Vocabulary::kClsId);
    for (const auto& l : treedata::preorder_labels(record.tree)) in.ast.push_back(labels_.lookup(l));
    return in;
  }

  EncodedPtr encode(const SampleRecord& record) const override {
    auto e = std::make_shared<DualEncoded>();
    e->input = make_input(record);
    return e;
  }

  /// O_code (L x d).
  Tensor nl_encode(std::span<const std::size_t> tokens, std::span<const std::uint8_t> mask, const RunContext& ctx) const {
    if (tokens.empty()) throw std::invalid_argument("nl_encode: empty token list");
    return nl_encoder_(tokens, mask, ctx);
  }

  /// O_ast ((L+1) x d); `ast` must already start with [CLS].
  Tensor ast_encode(std::span<const std::size_t> ast, const RunContext& ctx) const {
    if (ast.size() < 2 || ast.front() != Vocabulary::kClsId) {
      throw std::invalid_argument("ast_encode: need [CLS] followed by at least one node label");
    }
    return ast_encoder_(ast, {}, ctx);
  }

  CrossOutput fuse(const DualInput& in, const RunContext& ctx) const {
    const Tensor o_code = nl_encode(in.tokens, in.token_mask, ctx);
    const Tensor o_ast = ast_encode(in.ast, ctx);
    std::span<const std::uint8_t> code_mask = in.token_mask;
    if (code_mask.size() > o_code.rows()) code_mask = code_mask.first(o_code.rows());
    return cross_attend(o_code, code_mask, o_ast, {}, cross_, cfg_.cross_direction);
  }

  /// Row of the fused output feeding the head.
  Tensor summary_row(const CrossOutput& fused) const {
    const Tensor& side = cfg_.cross_direction == CrossDirection::code2ast ? fused.code_fused : fused.ast_fused;
    return nn::slice_rows(side, 0, 1);
  }

  Tensor head(const Tensor& z) const { return head_out_(nn::relu(head_hidden_(z))); }

  Tensor predict_input(const DualInput& in, const RunContext& ctx) const { return head(summary_row(fuse(in, ctx))); }

  Tensor forward(std::span<const Encoded* const> batch, const RunContext& ctx) override {
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const Encoded* e : batch) rows.push_back(predict_input(encoded_as<DualEncoded>(e).input, ctx));
    return nn::concat_rows(rows);
  }

  ParameterList parameters() const override {
    ParameterList out;
    nl_encoder_.collect(out);
    ast_encoder_.collect(out);
    cross_.collect(out);
    head_hidden_.collect(out);
    head_out_.collect(out);
    return out;
  }

  const CrossAttention& cross() const { return cross_; }
  EncoderStack& nl_encoder() { return nl_encoder_; }
  EncoderStack& ast_encoder() { return ast_encoder_; }

 private:
  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    const std::size_t d = cfg_.dim, ff = cfg_.ff_multiplier * cfg_.dim;
    const Real p = static_cast<Real>(cfg_.dropout);
    nl_encoder_ = EncoderStack("nl", tokens_.size(), cfg_.max_len, d, cfg_.heads, cfg_.blocks, ff, p, rng, cfg_.sinusoidal_positions);
    ast_encoder_ = EncoderStack("ast", labels_.size(), cfg_.max_len, d, cfg_.heads, cfg_.blocks, ff, p, rng, cfg_.sinusoidal_positions);
    cross_ = CrossAttention("cross", d, cfg_.heads, rng);
    head_hidden_ = nn::Linear("head.hidden", d, d / 2, rng);
    head_out_ = nn::Linear("head.out", d / 2, 1, rng);
  }

  ModelConfig cfg_;
  Vocabulary tokens_;
  Vocabulary labels_;
  EncoderStack nl_encoder_;
  EncoderStack ast_encoder_;
  CrossAttention cross_;
  nn::Linear head_hidden_;
  nn::Linear head_out_;
};

}  // namespace astreg::seqmodels
