#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "astreg/treedata/ast.hpp"

namespace astreg::treedata {

/// One source file with its measured durations and regression target.
struct SampleRecord {
  std::string id;
  std::string project;
  std::vector<std::string> tokens;
  AstTree tree;
  std::vector<double> runs_ms;
  double target = 0.0;

  bool operator==(const SampleRecord&) const = default;
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw ValidationError("median of an empty sequence");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Raw per-file duration: the median over repeated runs.
inline double raw_duration(const SampleRecord& r) { return median(r.runs_ms); }

inline void validate_record(const SampleRecord& r) {
  if (r.id.empty()) throw ValidationError("record: field 'id' is empty");
  if (r.tokens.empty()) throw ValidationError(fmt::format("record {}: field 'tokens' is empty", r.id));
  if (r.runs_ms.empty()) throw ValidationError(fmt::format("record {}: field 'runs_ms' is empty", r.id));
  for (double v : r.runs_ms)
    if (!(v > 0.0)) throw ValidationError(fmt::format("record {}: field 'runs_ms' has non-positive value {}", r.id, v));
}

}  // namespace astreg::treedata
