#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

namespace astreg::treedata {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One grammar construct. Terminals carry the token value; non-terminals do not.
struct AstNode {
  std::string type_label;
  std::optional<std::string> value;
  std::vector<AstNode> children;

  bool operator==(const AstNode&) const = default;
  bool is_leaf() const { return children.empty(); }
};

inline std::size_t count_nodes(const AstNode& node) {
  std::size_t n = 1;
  for (const auto& c : node.children) n += count_nodes(c);
  return n;
}

/// Rooted ordered tree; node and edge counts are cached at construction.
class AstTree {
 public:
  AstTree() : AstTree(AstNode{"Empty", std::nullopt, {}}) {}
  explicit AstTree(AstNode root) : root_(std::move(root)) {
    validate(root_);
    node_count_ = count_nodes(root_);
  }

  const AstNode& root() const { return root_; }
  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return node_count_ - 1; }

  bool operator==(const AstTree& other) const { return root_ == other.root_; }

 private:
  static void validate(const AstNode& node) {
    std::vector<const AstNode*> stack{&node};
    while (!stack.empty()) {
      const AstNode* n = stack.back();
      stack.pop_back();
      if (n->type_label.empty()) throw ValidationError("ast: node with empty type label");
      for (const auto& c : n->children) stack.push_back(&c);
    }
  }

  AstNode root_;
  std::size_t node_count_ = 1;
};

/// Pre-order flattening with parent links; index 0 is the root.
struct FlatTree {
  std::vector<const AstNode*> nodes;
  std::vector<std::size_t> parent;  // root's parent is itself
  std::vector<std::size_t> depth;
  std::vector<std::vector<std::size_t>> children;
  std::vector<std::size_t> child_index;  // position among siblings

  std::size_t size() const { return nodes.size(); }
};

inline FlatTree flatten(const AstTree& tree) {
  FlatTree flat;
  struct Frame {
    const AstNode* node;
    std::size_t parent;
    std::size_t depth;
    std::size_t child_index;
  };
  std::vector<Frame> stack{{&tree.root(), 0, 0, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const std::size_t id = flat.nodes.size();
    flat.nodes.push_back(f.node);
    flat.parent.push_back(id == 0 ? 0 : f.parent);
    flat.depth.push_back(f.depth);
    flat.child_index.push_back(f.child_index);
    flat.children.emplace_back();
    if (id != 0) flat.children[f.parent].push_back(id);
    for (std::size_t k = f.node->children.size(); k-- > 0;) {
      stack.push_back({&f.node->children[k], id, f.depth + 1, k});
    }
  }
  return flat;
}

inline std::size_t tree_depth(const AstTree& tree) {
  std::size_t best = 0;
  for (auto d : flatten(tree).depth) best = std::max(best, d);
  return best;
}

}  // namespace astreg::treedata
