#pragma once

#include <deque>
#include <vector>

#include "astreg/treedata/ast.hpp"

namespace astreg::treedata {

struct TreeStats {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::size_t diameter = 0;
  double density = 0.0;
};

struct CorpusStats {
  std::size_t trees = 0;
  double avg_nodes = 0.0;
  double avg_edges = 0.0;
  double avg_diameter = 0.0;
  double avg_density = 0.0;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> undirected_adjacency(const FlatTree& flat) {
  std::vector<std::vector<std::size_t>> adj(flat.size());
  for (std::size_t i = 1; i < flat.size(); ++i) {
    adj[i].push_back(flat.parent[i]);
    adj[flat.parent[i]].push_back(i);
  }
  return adj;
}

// Returns (farthest node, its distance) from `start`.
inline std::pair<std::size_t, std::size_t> bfs_farthest(const std::vector<std::vector<std::size_t>>& adj, std::size_t start) {
  std::vector<std::size_t> dist(adj.size(), static_cast<std::size_t>(-1));
  std::deque<std::size_t> queue{start};
  dist[start] = 0;
  std::pair<std::size_t, std::size_t> best{start, 0};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (dist[u] > best.second) best = {u, dist[u]};
    for (auto v : adj[u])
      if (dist[v] == static_cast<std::size_t>(-1)) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return best;
}

}  // namespace detail

/// Size, diameter (double BFS on the undirected view) and simple-graph density.
inline TreeStats compute_tree_stats(const AstTree& tree) {
  const FlatTree flat = flatten(tree);
  const auto adj = detail::undirected_adjacency(flat);
  TreeStats s;
  s.num_nodes = flat.size();
  s.num_edges = s.num_nodes - 1;
  const auto far = detail::bfs_farthest(adj, 0).first;
  s.diameter = detail::bfs_farthest(adj, far).second;
  const double v = static_cast<double>(s.num_nodes);
  s.density = s.num_nodes < 2 ? 0.0 : 2.0 * static_cast<double>(s.num_edges) / (v * (v - 1.0));
  return s;
}

/// Averages of per-tree statistics.
template <typename Range, typename TreeOf>
CorpusStats average_tree_stats(const Range& items, TreeOf tree_of) {
  CorpusStats c;
  for (const auto& item : items) {
    const TreeStats s = compute_tree_stats(tree_of(item));
    ++c.trees;
    c.avg_nodes += static_cast<double>(s.num_nodes);
    c.avg_edges += static_cast<double>(s.num_edges);
    c.avg_diameter += static_cast<double>(s.diameter);
    c.avg_density += s.density;
  }
  if (c.trees) {
    const double n = static_cast<double>(c.trees);
    c.avg_nodes /= n;
    c.avg_edges /= n;
    c.avg_diameter /= n;
    c.avg_density /= n;
  }
  return c;
}

}  // namespace astreg::treedata
