#pragma once
// Path-attention regression: each path context becomes
// c = [value(x_s) || path(p) || value(x_t)], c~ = tanh(c W), alpha = softmax(c~ a)
// over the sample's contexts and v = sum alpha_i c~_i feeds a linear head.

#include <memory>
#include <utility>
#include <vector>

#include "astreg/model.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::treemodels {

struct ContextIds {
  std::vector<std::size_t> start;
  std::vector<std::size_t> path;
  std::vector<std::size_t> end;

  std::size_t size() const { return path.size(); }
};

struct Code2VecEncoded : Encoded {
  ContextIds contexts;
};

struct Code2VecWeights {
  nn::Parameter values;    // |X| x d
  nn::Parameter paths;     // |P| x d
  nn::Parameter combine;   // 3d x d
  nn::Parameter attention; // d x 1
  nn::Parameter fallback;  // 1 x d, used when a tree has no contexts
  nn::Linear head;
};

struct Code2VecOutput {
  Tensor prediction;  // 1 x 1
  Tensor code_vector; // 1 x d
  Tensor alpha;       // k x 1, empty for a context-free sample
};

inline Code2VecOutput code2vec_forward(const ContextIds& ctx, const Code2VecWeights& w) {
  Code2VecOutput out;
  if (ctx.size() == 0) {
    out.code_vector = w.fallback;
  } else {
    const Tensor c = nn::concat_cols(
        {nn::gather_rows(w.values, ctx.start), nn::gather_rows(w.paths, ctx.path), nn::gather_rows(w.values, ctx.end)});
    const Tensor combined = nn::tanh(nn::matmul(c, w.combine));
    out.alpha = nn::transpose(nn::softmax_rows(nn::transpose(nn::matmul(combined, w.attention))));
    out.code_vector = nn::matmul(nn::transpose(out.alpha), combined);
  }
  out.prediction = w.head(out.code_vector);
  return out;
}

class Code2VecRegressor final : public Regressor {
 public:
  explicit Code2VecRegressor(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  ModelKind kind() const override { return ModelKind::code2vec; }
  const ModelConfig& config() const override { return cfg_; }

  void prepare(const std::vector<SampleRecord>& train, std::uint64_t seed) override {
    values_ = treedata::build_vocab(train, treedata::VocabSource::terminal_values, cfg_.min_freq);
    paths_ = treedata::build_vocab(train, treedata::VocabSource::path_keys, cfg_.min_freq, cfg_.paths);
    init(seed);
  }

  void restore(const nlohmann::json& state) override {
    cfg_ = ModelConfig::from_json(state.at("config"));
    values_ = treedata::Vocabulary::from_json(state.at("values"));
    paths_ = treedata::Vocabulary::from_json(state.at("paths"));
    init(0);
  }

  nlohmann::json state() const override {
    return {{"config", cfg_.to_json()}, {"values", values_.to_json()}, {"paths", paths_.to_json()}};
  }

  EncodedPtr encode(const SampleRecord& record) const override {
    auto e = std::make_shared<Code2VecEncoded>();
    for (const auto& pc : treedata::extract_path_contexts(record.tree, cfg_.paths)) {
      e->contexts.start.push_back(values_.lookup(pc.start_value));
      e->contexts.path.push_back(paths_.lookup(pc.path_key));
      e->contexts.end.push_back(values_.lookup(pc.end_value));
    }
    return e;
  }

  Tensor forward(std::span<const Encoded* const> batch, const RunContext&) override {
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const Encoded* e : batch) rows.push_back(code2vec_forward(encoded_as<Code2VecEncoded>(e).contexts, w_).prediction);
    return nn::concat_rows(rows);
  }

  ParameterList parameters() const override {
    ParameterList out{w_.values, w_.paths, w_.combine, w_.attention, w_.fallback};
    w_.head.collect(out);
    return out;
  }

  const Code2VecWeights& weights() const { return w_; }
  Code2VecWeights& weights() { return w_; }

 private:
  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    const std::size_t d = cfg_.code2vec_dim;
    w_.values = nn::normal_param("values", values_.size(), d, 0.02, rng);
    w_.paths = nn::normal_param("paths", paths_.size(), d, 0.02, rng);
    w_.combine = nn::uniform_param("combine", 3 * d, d, 3 * d, rng);
    w_.attention = nn::uniform_param("attention", d, 1, d, rng);
    w_.fallback = nn::normal_param("fallback", 1, d, 0.02, rng);
    w_.head = nn::Linear("head", d, 1, rng);
  }

  ModelConfig cfg_;
  treedata::Vocabulary values_;
  treedata::Vocabulary paths_;
  Code2VecWeights w_;
};

}  // namespace astreg::treemodels
