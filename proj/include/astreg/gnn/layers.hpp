#pragma once
// Message-passing layers over (possibly batched) trees. Edges are stored as
// (parent, child) pairs and treated as undirected.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "astreg/nn/layers.hpp"
#include "astreg/treedata/ast.hpp"

namespace astreg::gnn {

using nn::Parameter;
using nn::Real;
using nn::SparseCoefficients;
using nn::Tensor;

/// Node label ids, tree edges and node -> graph assignment for a batch.
struct GraphBatch {
  std::vector<std::size_t> labels;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> graph_ids;
  std::size_t num_graphs = 0;

  std::size_t num_nodes() const { return labels.size(); }

  void validate() const {
    if (graph_ids.size() != labels.size()) throw std::invalid_argument("GraphBatch: graph_ids/labels size mismatch");
    std::vector<std::size_t> nodes(num_graphs, 0), edge_count(num_graphs, 0);
    for (auto g : graph_ids) {
      if (g >= num_graphs) throw std::invalid_argument("GraphBatch: graph id out of range");
      ++nodes[g];
    }
    for (auto [u, v] : edges) {
      if (u >= labels.size() || v >= labels.size()) throw std::invalid_argument("GraphBatch: edge endpoint out of range");
      if (graph_ids[u] != graph_ids[v]) throw std::invalid_argument("GraphBatch: edge crosses graphs");
      ++edge_count[graph_ids[u]];
    }
    for (std::size_t g = 0; g < num_graphs; ++g)
      if (nodes[g] == 0 || edge_count[g] + 1 != nodes[g]) {
        throw std::invalid_argument(fmt::format("GraphBatch: graph {} is not a tree ({} nodes, {} edges)", g, nodes[g], edge_count[g]));
      }
  }

  void append(const GraphBatch& other) {
    const std::size_t offset = labels.size();
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    for (auto [u, v] : other.edges) edges.emplace_back(u + offset, v + offset);
    for (auto g : other.graph_ids) graph_ids.push_back(g + num_graphs);
    num_graphs += other.num_graphs;
  }
};

/// Single-graph batch from a tree, labels mapped through `label_id`.
template <typename LabelId>
GraphBatch graph_from_tree(const treedata::AstTree& tree, LabelId label_id) {
  const auto flat = treedata::flatten(tree);
  GraphBatch b;
  b.num_graphs = 1;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    b.labels.push_back(label_id(flat.nodes[i]->type_label));
    b.graph_ids.push_back(0);
    if (i) b.edges.emplace_back(flat.parent[i], i);
  }
  return b;
}

/// Precomputed propagation operators for one batch.
struct Propagation {
  std::size_t num_nodes = 0;
  SparseCoefficients gcn;           // D~^-1/2 (A + I) D~^-1/2
  SparseCoefficients mean_with_self; // mean over {i} u N(i)
  SparseCoefficients neighbor_sum;  // sum over N(i)
  std::vector<std::size_t> attn_src;  // directed pairs j -> i incl. self loops
  std::vector<std::size_t> attn_dst;

  explicit Propagation(const GraphBatch& batch) : num_nodes(batch.num_nodes()) {
    const std::size_t n = num_nodes;
    std::vector<std::vector<std::size_t>> nbr(n);
    for (auto [u, v] : batch.edges) {
      nbr[u].push_back(v);
      nbr[v].push_back(u);
    }
    for (auto* s : {&gcn, &mean_with_self, &neighbor_sum}) s->rows = s->cols = n;
    for (std::size_t i = 0; i < n; ++i) {
      const Real di = static_cast<Real>(nbr[i].size() + 1);
      if (di <= 0) throw std::logic_error("zero degree node");
      gcn.add(i, i, Real{1} / di);
      mean_with_self.add(i, i, Real{1} / di);
      attn_src.push_back(i);
      attn_dst.push_back(i);
      for (auto j : nbr[i]) {
        const Real dj = static_cast<Real>(nbr[j].size() + 1);
        gcn.add(i, j, Real{1} / std::sqrt(di * dj));
        mean_with_self.add(i, j, Real{1} / di);
        neighbor_sum.add(i, j, Real{1});
        attn_src.push_back(j);
        attn_dst.push_back(i);
      }
    }
  }
};

enum class Activation { relu, identity };

inline Tensor activate(const Tensor& x, Activation act) { return act == Activation::relu ? nn::relu(x) : x; }

/// H' = act(D~^-1/2 A~ D~^-1/2 H W)
inline Tensor gcn_forward(const Tensor& weight, const Propagation& prop, const Tensor& h,
                          Activation act = Activation::relu) {
  return activate(nn::spmm(prop.gcn, nn::matmul(h, weight)), act);
}

/// GAT with self loops; a is (2 d_out x 1). Attention coefficients (one per
/// directed pair in prop.attn_src/attn_dst) are returned through `alpha_out`.
inline Tensor gat_forward(const Tensor& weight, const Tensor& attention, const Propagation& prop, const Tensor& h,
                          Activation act = Activation::relu, Tensor* alpha_out = nullptr, Real slope = Real{0.2}) {
  const std::size_t d = weight.cols();
  if (attention.rows() != 2 * d || attention.cols() != 1) {
    throw nn::ShapeError(fmt::format("gat: attention vector {} for output dim {}", attention.shape_str(), d));
  }
  const Tensor z = nn::matmul(h, weight);
  const Tensor score_self = nn::matmul(z, nn::slice_rows(attention, 0, d));
  const Tensor score_nbr = nn::matmul(z, nn::slice_rows(attention, d, d));
  const Tensor logits = nn::leaky_relu(
      nn::add(nn::gather_rows(score_self, prop.attn_dst), nn::gather_rows(score_nbr, prop.attn_src)), slope);
  const Tensor alpha = nn::segment_softmax(logits, prop.attn_dst, prop.num_nodes);
  if (alpha_out) *alpha_out = alpha;
  const Tensor messages = nn::mul_col(nn::gather_rows(z, prop.attn_src), alpha);
  return activate(nn::segment_sum(messages, prop.attn_dst, prop.num_nodes), act);
}

/// h'_i = act(MEAN({h_i} u N(i)) W)
inline Tensor sage_forward(const Tensor& weight, const Propagation& prop, const Tensor& h,
                           Activation act = Activation::relu) {
  return activate(nn::matmul(nn::spmm(prop.mean_with_self, h), weight), act);
}

/// h'_i = MLP((1 + eps) h_i + sum_{j in N(i)} h_j)
inline Tensor gin_forward(const Tensor& eps, const std::function<Tensor(const Tensor&)>& mlp, const Propagation& prop,
                          const Tensor& h) {
  const Tensor self_term = nn::mul_scalar(h, nn::add_scalar(eps, Real{1}));
  return mlp(nn::add(self_term, nn::spmm(prop.neighbor_sum, h)));
}

}  // namespace astreg::gnn
