#pragma once
// Interchange format: one JSON object per record
//   {"id", "project", "tokens": [..], "runs_ms": [..],
//    "ast": {"type", "value": str|null, "children": [..]}}
// stored either as a directory of *.json files or one JSON-lines file.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "astreg/treedata/sample.hpp"

namespace astreg::treedata {

class CorpusParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sidecar written next to a corpus; never parsed as a record.
inline constexpr const char* kCorpusMetaFile = "corpus.meta.json";

inline nlohmann::json node_to_json(const AstNode& node) {
  nlohmann::json j;
  j["type"] = node.type_label;
  j["value"] = node.value ? nlohmann::json(*node.value) : nlohmann::json(nullptr);
  j["children"] = nlohmann::json::array();
  for (const auto& c : node.children) j["children"].push_back(node_to_json(c));
  return j;
}

inline AstNode node_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(fmt::format("{}: field 'ast' node is not an object", where));
  AstNode node;
  if (!j.contains("type") || !j["type"].is_string() || j["type"].get<std::string>().empty()) {
    throw ValidationError(fmt::format("{}: field 'ast.type' missing or empty", where));
  }
  node.type_label = j["type"].get<std::string>();
  if (j.contains("value") && !j["value"].is_null()) {
    if (!j["value"].is_string()) throw ValidationError(fmt::format("{}: field 'ast.value' is not a string", where));
    node.value = j["value"].get<std::string>();
  }
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw ValidationError(fmt::format("{}: field 'ast.children' is not an array", where));
    for (const auto& c : j["children"]) node.children.push_back(node_from_json(c, where));
  }
  return node;
}

inline nlohmann::json record_to_json(const SampleRecord& r) {
  return {{"id", r.id},
          {"project", r.project},
          {"tokens", r.tokens},
          {"runs_ms", r.runs_ms},
          {"ast", node_to_json(r.tree.root())}};
}

inline SampleRecord record_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(fmt::format("{}: record is not a JSON object", where));
  auto require = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) throw ValidationError(fmt::format("{}: missing field '{}'", where, field));
    return j[field];
  };
  SampleRecord r;
  try {
    r.id = require("id").get<std::string>();
    r.project = j.value("project", std::string{});
    r.tokens = require("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::type_error&) {
    throw ValidationError(fmt::format("{}: field 'id'/'project'/'tokens' has the wrong type", where));
  }
  try {
    r.runs_ms = require("runs_ms").get<std::vector<double>>();
  } catch (const nlohmann::json::type_error&) {
    throw ValidationError(fmt::format("{}: field 'runs_ms' must be an array of numbers", where));
  }
  r.tree = AstTree(node_from_json(require("ast"), where));
  validate_record(r);
  return r;
}

namespace detail {

inline nlohmann::json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorpusParseError(fmt::format("{}: malformed JSON at byte {}: {}", where, e.byte, e.what()));
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Loads and validates a corpus, sorted by id.
inline std::vector<SampleRecord> load_corpus(const std::filesystem::path& path) {
  std::vector<SampleRecord> records;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      const auto& p = e.path();
      if (e.is_regular_file() && p.extension() == ".json" && p.filename() != kCorpusMetaFile) files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      records.push_back(record_from_json(detail::parse_json_text(detail::read_file(f), f.string()), f.string()));
    }
  } else if (std::filesystem::is_regular_file(path)) {
    const std::string text = detail::read_file(path);
    std::size_t offset = 0, line_no = 0;
    while (offset < text.size()) {
      std::size_t end = text.find('\n', offset);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(offset, end - offset);
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        const std::string where = fmt::format("{}:{}", path.string(), line_no);
        try {
          records.push_back(record_from_json(nlohmann::json::parse(line), where));
        } catch (const nlohmann::json::parse_error& e) {
          throw CorpusParseError(fmt::format("{}: malformed JSON at byte {}: {}", path.string(), offset + e.byte - 1, e.what()));
        }
      }
      offset = end + 1;
    }
  } else {
    throw std::runtime_error(fmt::format("corpus path {} does not exist", path.string()));
  }
  if (records.empty()) throw EmptyCorpusError(fmt::format("empty corpus: no records in {}", path.string()));
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return records;
}

inline std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '/' || c == '\\' || c == ':'; }, '_');
  return s;
}

/// Writes one <id>.json per record into `dir`.
inline void save_corpus_dir(const std::filesystem::path& dir, const std::vector<SampleRecord>& records) {
  std::filesystem::create_directories(dir);
  for (const auto& r : records) {
    std::ofstream out(dir / (safe_file_stem(r.id) + ".json"));
    if (!out) throw std::runtime_error(fmt::format("cannot write into {}", dir.string()));
    out << record_to_json(r).dump() << '\n';
  }
}

inline void save_corpus_jsonl(const std::filesystem::path& file, const std::vector<SampleRecord>& records) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", file.string()));
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

/// Canonical serialisation used for content hashing.
inline std::string canonical_corpus_text(const std::vector<SampleRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace astreg::treedata
