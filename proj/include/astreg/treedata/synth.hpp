#pragma once
// Synthetic corpora with a planted duration function:
//   duration = a * (#LOOP nodes) + b * depth + c * (#tokens) + N(0, sigma)
// so that learning can be checked against known ground truth.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "astreg/treedata/sample.hpp"

namespace astreg::treedata {

inline constexpr std::array<const char*, 20> kSyntheticAlphabet = {
    "CompilationUnit",   "ClassDeclaration",  "MethodDeclaration", "LOOP",
    "IfStatement",       "BlockStatement",    "StatementExpression", "MethodInvocation",
    "LocalVariableDeclaration", "VariableDeclarator", "BinaryOperation", "Literal",
    "MemberReference",   "Assignment",        "ReturnStatement",   "FormalParameter",
    "ReferenceType",     "BasicType",         "ClassCreator",      "TryStatement"};

inline constexpr const char* kLoopLabel = "LOOP";

struct SynthConfig {
  std::size_t min_nodes = 12;
  std::size_t max_nodes = 48;
  double loop_prob_min = 0.02;  // per-tree LOOP probability is drawn from this range
  double loop_prob_max = 0.35;
  double chain_prob = 0.5;      // chance a new node hangs off the previous one (deepens trees)
  double a = 20.0;
  double b = 1.0;
  double c = 0.2;
  double sigma = 1.0;
  std::size_t runs_per_record = 5;
  std::string project = "synthetic";
  std::string id_prefix = "syn";

  nlohmann::json to_json() const {
    return {{"min_nodes", min_nodes}, {"max_nodes", max_nodes}, {"loop_prob_min", loop_prob_min},
            {"loop_prob_max", loop_prob_max}, {"chain_prob", chain_prob}, {"a", a}, {"b", b}, {"c", c},
            {"sigma", sigma}, {"runs_per_record", runs_per_record}, {"project", project}, {"id_prefix", id_prefix}};
  }
};

/// Sidecar contents: {"planted": {"a","b","c","sigma"}, "seed"} plus the generator settings.
inline nlohmann::json synthetic_metadata(std::uint64_t seed, const SynthConfig& cfg) {
  return {{"planted", {{"a", cfg.a}, {"b", cfg.b}, {"c", cfg.c}, {"sigma", cfg.sigma}}},
          {"seed", seed},
          {"generator", cfg.to_json()}};
}

inline std::size_t count_label(const AstNode& node, const std::string& label) {
  std::size_t n = node.type_label == label ? 1 : 0;
  for (const auto& c : node.children) n += count_label(c, label);
  return n;
}

namespace detail {

inline const char* keyword_for(const std::string& label) {
  static const std::vector<std::pair<std::string, const char*>> table = {
      {"CompilationUnit", "package"}, {"ClassDeclaration", "class"}, {"MethodDeclaration", "void"},
      {"LOOP", "for"}, {"IfStatement", "if"}, {"BlockStatement", "{"}, {"StatementExpression", ";"},
      {"MethodInvocation", "call"}, {"LocalVariableDeclaration", "var"}, {"VariableDeclarator", "decl"},
      {"BinaryOperation", "+"}, {"Assignment", "="}, {"ReturnStatement", "return"}, {"FormalParameter", "param"},
      {"ReferenceType", "Type"}, {"BasicType", "int"}, {"ClassCreator", "new"}, {"TryStatement", "try"}};
  for (const auto& [l, k] : table)
    if (l == label) return k;
  return nullptr;
}

inline void emit_tokens(const AstNode& node, std::vector<std::string>& out) {
  if (const char* kw = keyword_for(node.type_label)) out.emplace_back(kw);
  if (node.value) out.push_back(*node.value);
  for (const auto& c : node.children) emit_tokens(c, out);
}

}  // namespace detail

/// Deterministic for a fixed (n, seed, cfg).
inline std::vector<SampleRecord> generate_synthetic(std::size_t n, std::uint64_t seed, const SynthConfig& cfg = {}) {
  if (n == 0) throw std::invalid_argument("generate_synthetic: n must be >= 1");
  if (cfg.min_nodes < 2 || cfg.max_nodes < cfg.min_nodes) {
    throw std::invalid_argument("generate_synthetic: need 2 <= min_nodes <= max_nodes");
  }
  if (cfg.runs_per_record == 0) throw std::invalid_argument("generate_synthetic: runs_per_record must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<SampleRecord> out;
  out.reserve(n);
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t r = 0; r < n; ++r) {
    const auto count = std::uniform_int_distribution<std::size_t>(cfg.min_nodes, cfg.max_nodes)(rng);
    const double p_loop = std::uniform_real_distribution<double>(cfg.loop_prob_min, cfg.loop_prob_max)(rng);
    std::vector<std::string> labels{kSyntheticAlphabet[0]};
    std::vector<std::size_t> parent{0};
    std::bernoulli_distribution is_loop(p_loop), chain(cfg.chain_prob);
    std::uniform_int_distribution<std::size_t> other(1, kSyntheticAlphabet.size() - 1);
    for (std::size_t i = 1; i < count; ++i) {
      std::string label;
      if (is_loop(rng)) {
        label = kLoopLabel;
      } else {
        do label = kSyntheticAlphabet[other(rng)];
        while (label == kLoopLabel);
      }
      labels.push_back(std::move(label));
      parent.push_back(chain(rng) ? i - 1 : std::uniform_int_distribution<std::size_t>(0, i - 1)(rng));
    }
    if (std::find(labels.begin(), labels.end(), kLoopLabel) == labels.end()) {
      labels[std::uniform_int_distribution<std::size_t>(1, count - 1)(rng)] = kLoopLabel;
    }
    std::vector<std::vector<std::size_t>> kids(count);
    for (std::size_t i = 1; i < count; ++i) kids[parent[i]].push_back(i);
    std::uniform_int_distribution<int> ident(0, 15), digit(0, 9);
    std::vector<std::optional<std::string>> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!kids[i].empty()) continue;
      values[i] = labels[i] == "Literal" ? std::to_string(digit(rng)) : "v" + std::to_string(ident(rng));
    }
    auto build = [&](auto&& self, std::size_t i) -> AstNode {
      AstNode node{labels[i], values[i], {}};
      for (auto k : kids[i]) node.children.push_back(self(self, k));
      return node;
    };
    SampleRecord rec;
    rec.id = fmt::format("{}-{:0{}d}", cfg.id_prefix, r, width);
    rec.project = cfg.project;
    rec.tree = AstTree(build(build, 0));
    detail::emit_tokens(rec.tree.root(), rec.tokens);
    const double loops = static_cast<double>(count_label(rec.tree.root(), kLoopLabel));
    const double depth = static_cast<double>(tree_depth(rec.tree));
    const double clean = cfg.a * loops + cfg.b * depth + cfg.c * static_cast<double>(rec.tokens.size());
    std::normal_distribution<double> noise(0.0, cfg.sigma > 0 ? cfg.sigma : 1.0);
    for (std::size_t k = 0; k < cfg.runs_per_record; ++k) {
      const double d = cfg.sigma > 0 ? clean + noise(rng) : clean;
      rec.runs_ms.push_back(std::max(d, 1e-3));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace astreg::treedata
