#pragma once
// Tree-based convolution over ASTs with continuous-binary-tree weights.
//
// Coding layer:  p' = W_comb1 p + W_comb2 tanh(sum_i l_i W_code,i c_i + b_code)
// Convolution:   y  = tanh(W_top p' + sum_i l_i W_conv,i c'_i + b_conv)
// where W_*,i = eta_left,i W_left + eta_right,i W_right and l_i is the share of
// leaves under child i. Dynamic pooling takes the elementwise max over windows.
// Vectors are rows here, so every matrix product is written x * W.

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "astreg/model.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::treemodels {

using nn::Parameter;
using nn::SparseCoefficients;

/// Left/right interpolation for child i (1-based) of n.
inline std::pair<Real, Real> continuous_weights(std::size_t i, std::size_t n) {
  if (n == 0 || i < 1 || i > n) throw std::out_of_range(fmt::format("continuous_weights: child {} of {}", i, n));
  if (n == 1) return {Real{0.5}, Real{0.5}};
  const Real right = static_cast<Real>(i - 1) / static_cast<Real>(n - 1);
  return {Real{1} - right, right};
}

/// l_i = leaf_counts[i] / sum(leaf_counts).
inline std::vector<Real> leaf_coefficients(const std::vector<std::size_t>& leaf_counts) {
  std::size_t total = 0;
  for (auto c : leaf_counts) {
    if (c == 0) throw std::invalid_argument("leaf_coefficients: every subtree has at least one leaf");
    total += c;
  }
  std::vector<Real> out;
  out.reserve(leaf_counts.size());
  for (auto c : leaf_counts) out.push_back(static_cast<Real>(c) / static_cast<Real>(total));
  return out;
}

/// Tree structure as constant mixing operators: row p of left/right combines
/// p's children with weights l_i * eta_left,i and l_i * eta_right,i.
struct TreeWindows {
  std::vector<std::size_t> labels;
  SparseCoefficients left;
  SparseCoefficients right;
  std::vector<Real> internal;  // 1 for nodes with children

  std::size_t size() const { return labels.size(); }
};

template <typename LabelId>
TreeWindows tree_windows(const treedata::AstTree& tree, LabelId label_id) {
  const auto flat = treedata::flatten(tree);
  const std::size_t n = flat.size();
  std::vector<std::size_t> leaves(n, 0);
  for (std::size_t i = n; i-- > 0;) {
    if (flat.children[i].empty()) leaves[i] = 1;
    if (i) leaves[flat.parent[i]] += leaves[i];
  }
  TreeWindows w;
  w.left.rows = w.left.cols = w.right.rows = w.right.cols = n;
  w.internal.assign(n, Real{0});
  for (std::size_t p = 0; p < n; ++p) {
    w.labels.push_back(label_id(flat.nodes[p]->type_label));
    const auto& kids = flat.children[p];
    if (kids.empty()) continue;
    w.internal[p] = 1;
    std::vector<std::size_t> counts;
    for (auto k : kids) counts.push_back(leaves[k]);
    const auto l = leaf_coefficients(counts);
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const auto [eta_l, eta_r] = continuous_weights(i + 1, kids.size());
      w.left.add(p, kids[i], l[i] * eta_l);
      w.right.add(p, kids[i], l[i] * eta_r);
    }
  }
  return w;
}

struct TbcnnEncoded : Encoded {
  TreeWindows windows;
};

struct TbcnnWeights {
  Parameter embedding;
  Parameter comb1, comb2;
  Parameter code_left, code_right, code_bias;
  Parameter conv_top, conv_left, conv_right, conv_bias;
  nn::Linear head;
};

/// Coded node vectors (N x embed).
inline Tensor tbcnn_coding_layer(const TbcnnWeights& w, const TreeWindows& t) {
  const Tensor p = nn::gather_rows(w.embedding, t.labels);
  const Tensor children = nn::add_row(
      nn::add(nn::matmul(nn::spmm(t.left, p), w.code_left), nn::matmul(nn::spmm(t.right, p), w.code_right)), w.code_bias);
  const Tensor mixed = nn::mul_col(nn::matmul(nn::tanh(children), w.comb2), nn::constant(t.size(), 1, t.internal));
  return nn::add(nn::matmul(p, w.comb1), mixed);
}

/// One output row per window (node plus direct children).
inline Tensor tbcnn_convolve(const TbcnnWeights& w, const TreeWindows& t, const Tensor& coded) {
  const Tensor pre = nn::add(nn::add(nn::matmul(coded, w.conv_top), nn::matmul(nn::spmm(t.left, coded), w.conv_left)),
                             nn::matmul(nn::spmm(t.right, coded), w.conv_right));
  return nn::tanh(nn::add_row(pre, w.conv_bias));
}

/// Dynamic (max) pooling over windows: 1 x conv.
inline Tensor tbcnn_convolve_and_pool(const TbcnnWeights& w, const TreeWindows& t) {
  return nn::max_rows(tbcnn_convolve(w, t, tbcnn_coding_layer(w, t)));
}

class TbcnnRegressor final : public Regressor {
 public:
  explicit TbcnnRegressor(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  ModelKind kind() const override { return ModelKind::tbcnn; }
  const ModelConfig& config() const override { return cfg_; }

  void prepare(const std::vector<SampleRecord>& train, std::uint64_t seed) override {
    labels_ = treedata::build_vocab(train, treedata::VocabSource::node_labels, cfg_.min_freq);
    init(seed);
  }

  void restore(const nlohmann::json& state) override {
    cfg_ = ModelConfig::from_json(state.at("config"));
    labels_ = treedata::Vocabulary::from_json(state.at("node_labels"));
    init(0);
  }

  nlohmann::json state() const override { return {{"config", cfg_.to_json()}, {"node_labels", labels_.to_json()}}; }

  EncodedPtr encode(const SampleRecord& record) const override {
    auto e = std::make_shared<TbcnnEncoded>();
    e->windows = tree_windows(record.tree, [this](const std::string& s) { return labels_.lookup(s); });
    return e;
  }

  Tensor forward(std::span<const Encoded* const> batch, const RunContext&) override {
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const Encoded* e : batch) rows.push_back(w_.head(tbcnn_convolve_and_pool(w_, encoded_as<TbcnnEncoded>(e).windows)));
    return nn::concat_rows(rows);
  }

  ParameterList parameters() const override {
    ParameterList out{w_.embedding, w_.comb1,    w_.comb2,     w_.code_left,  w_.code_right,
                      w_.code_bias, w_.conv_top, w_.conv_left, w_.conv_right, w_.conv_bias};
    w_.head.collect(out);
    return out;
  }

  const TbcnnWeights& weights() const { return w_; }
  TbcnnWeights& weights() { return w_; }

 private:
  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    const std::size_t e = cfg_.tbcnn_embed, c = cfg_.tbcnn_conv;
    w_.embedding = nn::normal_param("embedding", labels_.size(), e, 0.02, rng);
    w_.comb1 = nn::uniform_param("coding.comb1", e, e, e, rng);
    w_.comb2 = nn::uniform_param("coding.comb2", e, e, e, rng);
    w_.code_left = nn::uniform_param("coding.left", e, e, e, rng);
    w_.code_right = nn::uniform_param("coding.right", e, e, e, rng);
    w_.code_bias = nn::filled_param("coding.bias", 1, e, Real{0});
    w_.conv_top = nn::uniform_param("conv.top", e, c, e, rng);
    w_.conv_left = nn::uniform_param("conv.left", e, c, e, rng);
    w_.conv_right = nn::uniform_param("conv.right", e, c, e, rng);
    w_.conv_bias = nn::filled_param("conv.bias", 1, c, Real{0});
    w_.head = nn::Linear("head", c, 1, rng);
  }

  ModelConfig cfg_;
  treedata::Vocabulary labels_;
  TbcnnWeights w_;
};

}  // namespace astreg::treemodels
