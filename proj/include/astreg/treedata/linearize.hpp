#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "astreg/treedata/ast.hpp"

namespace astreg::treedata {

inline constexpr const char* kSplitPlaceholder = "[SPLIT]";

/// Depth-first pre-order of type labels; a terminal's value follows its label.
inline std::vector<std::string> linearize_preorder(const AstTree& tree) {
  std::vector<std::string> out;
  out.reserve(tree.node_count());
  std::vector<const AstNode*> stack{&tree.root()};
  while (!stack.empty()) {
    const AstNode* n = stack.back();
    stack.pop_back();
    out.push_back(n->type_label);
    if (n->value) out.push_back(*n->value);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(&*it);
  }
  return out;
}

/// Pre-order type labels only (no terminal values).
inline std::vector<std::string> preorder_labels(const AstTree& tree) {
  std::vector<std::string> out;
  out.reserve(tree.node_count());
  for (const AstNode* n : flatten(tree).nodes) out.push_back(n->type_label);
  return out;
}

/// Labels ending in "Statement" plus method and constructor declarations.
inline bool is_default_statement_label(const std::string& label) {
  constexpr std::string_view suffix = "Statement";
  if (label.size() >= suffix.size() && label.compare(label.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return true;
  }
  return label == "MethodDeclaration" || label == "ConstructorDeclaration";
}

struct StatementLabels {
  std::set<std::string> exact;
  bool default_rule = true;

  bool contains(const std::string& label) const {
    return exact.count(label) != 0 || (default_rule && is_default_statement_label(label));
  }
};

/// Splits at every node whose label is a statement label. Each statement
/// subtree becomes its own tree (nested statements leave a [SPLIT] leaf behind
/// in the enclosing piece); pieces appear in pre-order of their roots and the
/// root's residual skeleton comes last. A tree without split points is
/// returned unchanged as the only piece.
inline std::vector<AstTree> split_statement_subtrees(const AstTree& tree, const StatementLabels& labels) {
  std::vector<std::optional<AstNode>> slots;
  auto build = [&](auto&& self, const AstNode& node) -> AstNode {
    AstNode copy{node.type_label, node.value, {}};
    copy.children.reserve(node.children.size());
    for (const auto& child : node.children) {
      if (labels.contains(child.type_label)) {
        copy.children.push_back(AstNode{kSplitPlaceholder, std::nullopt, {}});
        const std::size_t slot = slots.size();
        slots.emplace_back();
        AstNode piece = self(self, child);
        slots[slot] = std::move(piece);
      } else {
        copy.children.push_back(self(self, child));
      }
    }
    return copy;
  };
  AstNode residual = build(build, tree.root());
  std::vector<AstTree> out;
  out.reserve(slots.size() + 1);
  for (auto& s : slots) out.emplace_back(std::move(*s));
  out.emplace_back(std::move(residual));
  return out;
}

inline std::vector<AstTree> split_statement_subtrees(const AstTree& tree) {
  return split_statement_subtrees(tree, StatementLabels{});
}

}  // namespace astreg::treedata
