#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "astreg/treedata/linearize.hpp"
#include "astreg/treedata/paths.hpp"
#include "astreg/treedata/sample.hpp"

namespace astreg::treedata {

inline constexpr const char* kPad = "[PAD]";
inline constexpr const char* kUnk = "[UNK]";
inline constexpr const char* kCls = "[CLS]";
inline constexpr const char* kSep = "[SEP]";

/// Dense string -> index map. Specials take indices 0..3; unknown strings map to [UNK].
class Vocabulary {
 public:
  static constexpr std::size_t kPadId = 0;
  static constexpr std::size_t kUnkId = 1;
  static constexpr std::size_t kClsId = 2;
  static constexpr std::size_t kSepId = 3;
  static constexpr std::size_t kNumSpecials = 4;

  Vocabulary() {
    for (const char* s : {kPad, kUnk, kCls, kSep}) push(s);
  }

  std::size_t size() const { return entries_.size(); }

  std::size_t lookup(const std::string& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& s) const { return index_.count(s) != 0; }
  const std::string& at(std::size_t i) const { return entries_.at(i); }
  const std::vector<std::string>& entries() const { return entries_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& items) const {
    std::vector<std::size_t> out;
    out.reserve(items.size());
    for (const auto& s : items) out.push_back(lookup(s));
    return out;
  }

  /// Appends a non-special entry; no-op when present.
  void push(const std::string& s) {
    if (index_.count(s)) return;
    index_.emplace(s, entries_.size());
    entries_.push_back(s);
  }

  nlohmann::json to_json() const { return entries_; }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    const auto entries = j.get<std::vector<std::string>>();
    if (entries.size() < kNumSpecials || entries[0] != kPad || entries[1] != kUnk || entries[2] != kCls || entries[3] != kSep) {
      throw ValidationError("vocabulary: special entries missing or out of order");
    }
    for (std::size_t i = kNumSpecials; i < entries.size(); ++i) v.push(entries[i]);
    return v;
  }

  bool operator==(const Vocabulary& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class VocabSource { tokens, node_labels, path_keys, terminal_values, linearized };

/// Strings a record contributes to a vocabulary of the given source.
inline std::vector<std::string> vocab_items(const SampleRecord& r, VocabSource source, const PathOptions& paths = {}) {
  switch (source) {
    case VocabSource::tokens:
      return r.tokens;
    case VocabSource::node_labels:
      return preorder_labels(r.tree);
    case VocabSource::linearized: {
      std::vector<std::string> out;
      for (const auto& piece : split_statement_subtrees(r.tree)) {
        auto lin = linearize_preorder(piece);
        out.insert(out.end(), lin.begin(), lin.end());
      }
      return out;
    }
    case VocabSource::terminal_values: {
      std::vector<std::string> out;
      for (const AstNode* n : flatten(r.tree).nodes)
        if (n->value) out.push_back(*n->value);
      return out;
    }
    case VocabSource::path_keys: {
      std::vector<std::string> out;
      for (auto& c : extract_path_contexts(r.tree, paths)) out.push_back(std::move(c.path_key));
      return out;
    }
  }
  return {};
}

/// Keeps strings with frequency >= min_freq, ordered by descending frequency
/// then lexicographically.
inline Vocabulary build_vocab(const std::vector<SampleRecord>& records, VocabSource source, std::size_t min_freq,
                              const PathOptions& paths = {}) {
  if (records.empty()) throw ValidationError("build_vocab: no records");
  std::map<std::string, std::size_t> freq;
  for (const auto& r : records)
    for (auto& s : vocab_items(r, source, paths)) ++freq[s];
  std::vector<std::pair<std::string, std::size_t>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [s, n] : ordered)
    if (n >= std::max<std::size_t>(min_freq, 1)) v.push(s);
  return v;
}

}  // namespace astreg::treedata
