#pragma once
// code2vec-style path contexts between pairs of valued terminals.

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "astreg/treedata/ast.hpp"

namespace astreg::treedata {

inline constexpr const char* kUpArrow = "\xE2\x86\x91";    // U+2191
inline constexpr const char* kDownArrow = "\xE2\x86\x93";  // U+2193

struct PathContext {
  std::string start_value;
  std::string path_key;
  std::string end_value;

  bool operator==(const PathContext&) const = default;
  auto operator<=>(const PathContext&) const = default;
};

struct PathOptions {
  std::size_t max_length = 8;
  std::size_t max_width = 2;
  std::size_t max_contexts = 200;
  std::uint64_t seed = 0;
};

/// Every terminal pair (s before t in pre-order) whose connecting path has at
/// most `max_length` edges and whose branches below the lowest common ancestor
/// are at most `max_width` siblings apart. When more than `max_contexts`
/// qualify, a seeded uniform sample is kept in pre-order pair order.
inline std::vector<PathContext> extract_path_contexts(const AstTree& tree, const PathOptions& opt) {
  if (opt.max_length < 2 || opt.max_width < 1 || opt.max_contexts < 1) {
    throw std::invalid_argument("extract_path_contexts: need max_length >= 2, max_width >= 1, max_contexts >= 1");
  }
  const FlatTree flat = flatten(tree);
  std::vector<std::size_t> terminals;
  for (std::size_t i = 0; i < flat.size(); ++i)
    if (flat.nodes[i]->value) terminals.push_back(i);
  std::vector<PathContext> out;
  if (terminals.size() < 2) return out;

  std::vector<std::size_t> up, down;
  for (std::size_t a = 0; a < terminals.size(); ++a) {
    for (std::size_t b = a + 1; b < terminals.size(); ++b) {
      std::size_t s = terminals[a], t = terminals[b];
      // Walk both ends up to the common ancestor, remembering the branch taken.
      up.assign(1, s);
      down.assign(1, t);
      std::size_t x = s, y = t;
      while (flat.depth[x] > flat.depth[y]) up.push_back(x = flat.parent[x]);
      while (flat.depth[y] > flat.depth[x]) down.push_back(y = flat.parent[y]);
      while (x != y) {
        up.push_back(x = flat.parent[x]);
        down.push_back(y = flat.parent[y]);
      }
      const std::size_t length = (up.size() - 1) + (down.size() - 1);
      if (length > opt.max_length) continue;
      // Branch children of the ancestor; an endpoint that is itself the ancestor has width 0.
      std::size_t width = 0;
      if (up.size() >= 2 && down.size() >= 2) {
        const std::size_t ci = flat.child_index[up[up.size() - 2]];
        const std::size_t cj = flat.child_index[down[down.size() - 2]];
        width = ci > cj ? ci - cj : cj - ci;
      }
      if (width > opt.max_width) continue;
      std::string key;
      for (std::size_t k = 0; k < up.size(); ++k) {
        if (k) key += kUpArrow;
        key += flat.nodes[up[k]]->type_label;
      }
      for (std::size_t k = down.size() - 1; k-- > 0;) {
        key += kDownArrow;
        key += flat.nodes[down[k]]->type_label;
      }
      out.push_back({*flat.nodes[s]->value, std::move(key), *flat.nodes[t]->value});
    }
  }
  if (out.size() > opt.max_contexts) {
    std::vector<std::size_t> keep(out.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    std::mt19937_64 rng(opt.seed);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(opt.max_contexts);
    std::sort(keep.begin(), keep.end());
    std::vector<PathContext> sampled;
    sampled.reserve(keep.size());
    for (auto i : keep) sampled.push_back(std::move(out[i]));
    out = std::move(sampled);
  }
  return out;
}

}  // namespace astreg::treedata
