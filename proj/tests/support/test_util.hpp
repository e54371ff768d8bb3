#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "astreg/treedata/ast.hpp"
#include "astreg/treedata/sample.hpp"

namespace astreg::testing {

using treedata::AstNode;
using treedata::AstTree;

/// Random rooted tree: node i > 0 hangs under a uniformly chosen earlier node.
/// Leaves get a value with probability `value_prob`.
inline AstTree random_tree(std::size_t n, std::mt19937_64& rng, double value_prob = 1.0,
                           const std::vector<std::string>& labels = {"A", "B", "C", "D", "E"}) {
  std::vector<std::size_t> parent(n, 0);
  for (std::size_t i = 1; i < n; ++i) parent[i] = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t i = 1; i < n; ++i) kids[parent[i]].push_back(i);
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  std::bernoulli_distribution valued(value_prob);
  std::vector<std::string> label(n);
  for (auto& l : label) l = labels[pick(rng)];
  auto build = [&](auto&& self, std::size_t i) -> AstNode {
    AstNode node{label[i], std::nullopt, {}};
    if (kids[i].empty() && valued(rng)) node.value = "x" + std::to_string(i);
    for (auto k : kids[i]) node.children.push_back(self(self, k));
    return node;
  };
  return AstTree(build(build, 0));
}

inline AstNode leaf(std::string type, std::optional<std::string> value = std::nullopt) {
  return AstNode{std::move(type), std::move(value), {}};
}

inline AstNode node(std::string type, std::vector<AstNode> children) {
  return AstNode{std::move(type), std::nullopt, std::move(children)};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("astreg_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace astreg::testing
