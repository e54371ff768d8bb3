#pragma once
// Seeded train/test partitions for the three protocols.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "astreg/treedata/sample.hpp"

namespace astreg::harness {

using treedata::SampleRecord;

class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

/// floor(n * fraction), guarded against representation error (0.3 * 10 -> 3).
inline std::size_t portion_size(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

inline std::vector<SampleRecord> pick(const std::vector<SampleRecord>& records, const std::vector<std::size_t>& idx) {
  std::vector<SampleRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(records.at(i));
  return out;
}

/// Throws if any record id appears in both sets.
inline void require_disjoint(const std::vector<SampleRecord>& a, const std::vector<SampleRecord>& b, const std::string& what) {
  std::set<std::string> ids;
  for (const auto& r : a) ids.insert(r.id);
  for (const auto& r : b)
    if (ids.count(r.id)) throw ProtocolViolation(fmt::format("{}: record '{}' is on both sides", what, r.id));
}

struct Split {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

/// Shuffle by seed, first floor(n * train_frac) records train, the rest test.
inline Split split_dataset(const std::vector<SampleRecord>& records, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0 && train_frac < 1)) throw std::invalid_argument(fmt::format("train fraction {} not in (0, 1)", train_frac));
  if (records.size() < 2) throw std::invalid_argument("split_dataset: need at least 2 records");
  const auto perm = seeded_permutation(records.size(), seed);
  const std::size_t k = portion_size(records.size(), train_frac);
  if (k == 0 || k == records.size()) {
    throw std::invalid_argument(fmt::format("split_dataset: {} records at fraction {} leave an empty side", records.size(), train_frac));
  }
  Split s;
  s.train = pick(records, {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k)});
  s.test = pick(records, {perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end()});
  require_disjoint(s.train, s.test, "split_dataset");
  return s;
}

/// Nested training pools (one per fraction, ascending) and a test set drawn
/// from outside the largest pool, shared by every fraction.
struct SweepSplit {
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::size_t> test;
};

inline SweepSplit sweep_split(std::size_t n, const std::vector<double>& fractions, double test_fraction, std::uint64_t seed) {
  if (fractions.empty()) throw std::invalid_argument("sweep: no fractions");
  for (double f : fractions)
    if (!(f > 0 && f < 1)) throw std::invalid_argument(fmt::format("sweep fraction {} not in (0, 1)", f));
  const double largest = *std::max_element(fractions.begin(), fractions.end());
  const std::size_t pool = portion_size(n, largest);
  const std::size_t test = portion_size(n, test_fraction);
  if (test < 1 || pool + test > n) {
    throw std::invalid_argument(fmt::format("sweep: {} records cannot hold a {} pool and a {} test set", n, largest, test_fraction));
  }
  const auto perm = seeded_permutation(n, seed);
  SweepSplit s;
  for (double f : fractions) {
    const std::size_t k = portion_size(n, f);
    if (k < 2) throw std::invalid_argument(fmt::format("sweep: fraction {} of {} records leaves fewer than 2 for training", f, n));
    s.train.emplace_back(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  }
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(pool), perm.begin() + static_cast<std::ptrdiff_t>(pool + test));
  return s;
}

/// A fixed test slice of the target corpus plus nested fine-tuning portions
/// taken from the remainder. Portion 0 is allowed and is empty.
struct TransferSplit {
  std::vector<std::vector<std::size_t>> finetune;
  std::vector<std::size_t> test;
};

inline TransferSplit transfer_split(std::size_t n, const std::vector<double>& portions, double test_fraction, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("transfer: empty target corpus");
  const std::size_t test = std::max<std::size_t>(1, portion_size(n, test_fraction));
  if (test >= n) throw std::invalid_argument(fmt::format("transfer: {} target records leave nothing to fine-tune on", n));
  const auto perm = seeded_permutation(n, seed);
  TransferSplit s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test));
  for (double p : portions) {
    if (!(p >= 0 && p < 1)) throw std::invalid_argument(fmt::format("transfer portion {} not in [0, 1)", p));
    const std::size_t k = portion_size(n, p);
    if (test + k > n) throw std::invalid_argument(fmt::format("transfer: portion {} overlaps the test slice", p));
    s.finetune.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(test), perm.begin() + static_cast<std::ptrdiff_t>(test + k));
  }
  return s;
}

}  // namespace astreg::harness
