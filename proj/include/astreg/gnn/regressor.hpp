#pragma once

#include <memory>
#include <vector>

#include "astreg/gnn/layers.hpp"
#include "astreg/model.hpp"
#include "astreg/treedata/vocab.hpp"

namespace astreg::gnn {

struct GraphEncoded : Encoded {
  GraphBatch graph;
};

/// One message-passing layer of the configured kind.
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(ModelKind kind, const std::string& name, std::size_t in, std::size_t out, nn::Rng& rng) : kind_(kind) {
    switch (kind) {
      case ModelKind::gcn:
      case ModelKind::sage:
        weight_ = nn::uniform_param(name + ".weight", in, out, in, rng);
        break;
      case ModelKind::gat:
        weight_ = nn::uniform_param(name + ".weight", in, out, in, rng);
        attention_ = nn::uniform_param(name + ".attention", 2 * out, 1, 2 * out, rng);
        break;
      case ModelKind::gin:
        eps_ = nn::filled_param(name + ".eps", 1, 1, Real{0});
        mlp_in_ = nn::Linear(name + ".mlp.0", in, out, rng);
        mlp_out_ = nn::Linear(name + ".mlp.1", out, out, rng);
        break;
      default:
        throw std::invalid_argument("ConvLayer: not a graph model kind");
    }
  }

  Tensor operator()(const Propagation& prop, const Tensor& h) const {
    switch (kind_) {
      case ModelKind::gcn: return gcn_forward(weight_, prop, h);
      case ModelKind::gat: return gat_forward(weight_, attention_, prop, h);
      case ModelKind::sage: return sage_forward(weight_, prop, h);
      case ModelKind::gin:
        return gin_forward(eps_, [this](const Tensor& x) { return mlp_out_(nn::relu(mlp_in_(x))); }, prop, h);
      default: throw std::logic_error("unreachable");
    }
  }

  void collect(ParameterList& out) const {
    if (kind_ == ModelKind::gin) {
      out.push_back(eps_);
      mlp_in_.collect(out);
      mlp_out_.collect(out);
      return;
    }
    out.push_back(weight_);
    if (kind_ == ModelKind::gat) out.push_back(attention_);
  }

 private:
  ModelKind kind_ = ModelKind::gcn;
  nn::Parameter weight_;
  nn::Parameter attention_;
  nn::Parameter eps_;
  nn::Linear mlp_in_;
  nn::Linear mlp_out_;
};

/// conv1 -> BN -> dropout -> conv2 -> BN -> [mean || max] pool -> 60 -> 30 -> 1.
class GraphRegressor final : public Regressor {
 public:
  explicit GraphRegressor(ModelConfig cfg) : cfg_(std::move(cfg)) {
    if (!is_graph_kind(cfg_.kind)) throw std::invalid_argument("GraphRegressor needs a graph model kind");
  }

  ModelKind kind() const override { return cfg_.kind; }
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

  const treedata::Vocabulary& labels() const { return labels_; }

  EncodedPtr encode(const SampleRecord& record) const override {
    auto e = std::make_shared<GraphEncoded>();
    e->graph = graph_from_tree(record.tree, [this](const std::string& s) { return labels_.lookup(s); });
    return e;
  }

  Tensor forward(std::span<const Encoded* const> batch, const RunContext& ctx) override {
    GraphBatch merged;
    for (const Encoded* e : batch) merged.append(encoded_as<GraphEncoded>(e).graph);
    return forward_graphs(merged, ctx);
  }

  /// Per-graph predictions (num_graphs x 1).
  Tensor forward_graphs(const GraphBatch& batch, const RunContext& ctx) {
    batch.validate();
    const Propagation prop(batch);
    Tensor h = node_features(batch);
    h = norm1_(conv1_(prop, h), ctx);
    if (ctx.training && ctx.rng) h = nn::dropout(h, static_cast<Real>(cfg_.gnn_dropout), *ctx.rng);
    h = norm2_(conv2_(prop, h), ctx);
    if (ctx.training && ctx.rng) h = nn::dropout(h, static_cast<Real>(cfg_.gnn_dropout), *ctx.rng);
    const Tensor pooled = nn::concat_cols({nn::segment_mean(h, batch.graph_ids, batch.num_graphs),
                                           nn::segment_max(h, batch.graph_ids, batch.num_graphs)});
    return head_out_(nn::relu(head_hidden_(pooled)));
  }

  ParameterList parameters() const override {
    ParameterList out;
    if (!cfg_.gnn_one_hot) out.push_back(embedding_);
    conv1_.collect(out);
    norm1_.collect(out);
    conv2_.collect(out);
    norm2_.collect(out);
    head_hidden_.collect(out);
    head_out_.collect(out);
    return out;
  }

  ParameterList buffers() const override {
    ParameterList out;
    norm1_.collect_buffers(out);
    norm2_.collect_buffers(out);
    return out;
  }

 private:
  Tensor node_features(const GraphBatch& batch) const {
    if (!cfg_.gnn_one_hot) return nn::gather_rows(embedding_, batch.labels);
    const std::size_t v = labels_.size();
    std::vector<Real> x(batch.num_nodes() * v, Real{0});
    for (std::size_t i = 0; i < batch.num_nodes(); ++i) x[i * v + std::min(batch.labels[i], v - 1)] = 1;
    return nn::constant(batch.num_nodes(), v, std::move(x));
  }

  void init(std::uint64_t seed) {
    nn::Rng rng(seed);
    const std::size_t in = cfg_.gnn_one_hot ? labels_.size() : cfg_.gnn_embed;
    if (!cfg_.gnn_one_hot) embedding_ = nn::normal_param("node_embedding", labels_.size(), cfg_.gnn_embed, 0.02, rng);
    conv1_ = ConvLayer(cfg_.kind, "conv1", in, cfg_.gnn_hidden1, rng);
    norm1_ = nn::BatchNorm("norm1", cfg_.gnn_hidden1);
    conv2_ = ConvLayer(cfg_.kind, "conv2", cfg_.gnn_hidden1, cfg_.gnn_hidden2, rng);
    norm2_ = nn::BatchNorm("norm2", cfg_.gnn_hidden2);
    head_hidden_ = nn::Linear("head.hidden", 2 * cfg_.gnn_hidden2, cfg_.gnn_hidden2, rng);
    head_out_ = nn::Linear("head.out", cfg_.gnn_hidden2, 1, rng);
  }

  ModelConfig cfg_;
  treedata::Vocabulary labels_;
  nn::Parameter embedding_;
  ConvLayer conv1_;
  nn::BatchNorm norm1_;
  ConvLayer conv2_;
  nn::BatchNorm norm2_;
  nn::Linear head_hidden_;
  nn::Linear head_out_;
};

}  // namespace astreg::gnn
