#pragma once
// Transformer over split ASTs: each statement subtree is linearized (labels
// and values in pre-order), pieces are joined with [SEP] and one encoder runs
// over the result. A linear head reads position 0.

#include <memory>
#include <utility>
#include <vector>

#include "astreg/model.hpp"
#include "astreg/seqmodels/encoder.hpp"
#include "astreg/treedata/linearize.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::seqmodels {

/// Pieces in split order separated by [SEP]; a tree without statements gives
/// its plain pre-order linearization.
inline std::vector<std::string> tbast_sequence(const treedata::AstTree& tree) {
  std::vector<std::string> seq;
  bool first = true;
  for (const auto& piece : treedata::split_statement_subtrees(tree)) {
    if (!first) seq.emplace_back(treedata::kSep);
    first = false;
    auto lin = treedata::linearize_preorder(piece);
    seq.insert(seq.end(), lin.begin(), lin.end());
  }
  return seq;
}

struct TbastEncoded : Encoded {
  std::vector<std::size_t> ids;
};

class TbastModel final : public Regressor {
 public:
  explicit TbastModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  ModelKind kind() const override { return ModelKind::tbast; }
  const ModelConfig& config() const override { return cfg_; }

  void prepare(const std::vector<SampleRecord>& train, std::uint64_t seed) override {
    vocab_ = treedata::build_vocab(train, treedata::VocabSource::linearized, cfg_.min_freq);
    init(seed);
  }

  void restore(const nlohmann::json& state) override {
    cfg_ = ModelConfig::from_json(state.at("config"));
    vocab_ = treedata::Vocabulary::from_json(state.at("vocab"));
    init(0);
  }

  nlohmann::json state() const override { return {{"config", cfg_.to_json()}, {"vocab", vocab_.to_json()}}; }

  EncodedPtr encode(const SampleRecord& record) const override {
    auto e = std::make_shared<TbastEncoded>();
    e->ids = vocab_.encode(tbast_sequence(record.tree));
    return e;
  }

  Tensor predict_ids(std::span<const std::size_t> ids, const RunContext& ctx) const {
    return head_(nn::slice_rows(encoder_(ids, {}, ctx), 0, 1));
  }

  Tensor forward(std::span<const Encoded* const> batch, const RunContext& ctx) override {
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const Encoded* e : batch) rows.push_back(predict_ids(encoded_as<TbastEncoded>(e).ids, ctx));
    return nn::concat_rows(rows);
  }

  ParameterList parameters() const override {
    ParameterList out;
    encoder_.collect(out);
    head_.collect(out);
    return out;
  }

 private:
  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    encoder_ = EncoderStack("encoder", vocab_.size(), cfg_.max_len, cfg_.dim, cfg_.heads, cfg_.blocks,
                            cfg_.ff_multiplier * cfg_.dim, static_cast<Real>(cfg_.dropout), rng, cfg_.sinusoidal_positions);
    head_ = nn::Linear("head", cfg_.dim, 1, rng);
  }

  ModelConfig cfg_;
  treedata::Vocabulary vocab_;
  EncoderStack encoder_;
  nn::Linear head_;
};

}  // namespace astreg::seqmodels
