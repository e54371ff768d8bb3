#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "astreg/nn/tensor.hpp"

namespace astreg::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  std::size_t entries_refined = 0;  // entries settled below the largest step
};

struct GradCheckOptions {
  /// Largest step. Steps eps, eps/10, ... down to min_epsilon are tried and the
  /// estimate where consecutive steps agree best is kept, which steps past
  /// ReLU/max kinks without descending into roundoff.
  double epsilon = 1e-3;
  double min_epsilon = 1e-7;
  /// Consecutive estimates this close (relative) end the search early.
  double agreement = 1e-9;
  /// 0 checks every entry; otherwise at most this many seeded-random entries
  /// per parameter.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 0;
};

/// Compares the analytic gradient of the scalar `loss` with central finite
/// differences (f(x+eps) - f(x-eps)) / 2eps, entry by entry. Relative error
/// uses the denominator max(|analytic|, |numeric|, 1e-8).
inline GradCheckResult grad_check(const std::function<Tensor()>& loss, ParameterList params,
                                  const GradCheckOptions& options = {}) {
  const double eps0 = options.epsilon;
  const double eps_min = std::max(options.min_epsilon, 1e-7);
  if (!(eps0 >= 1e-7 && eps0 <= 1e-3)) {
    throw std::invalid_argument(fmt::format("grad_check: epsilon {} outside [1e-7, 1e-3]", eps0));
  }
  auto evaluate = [&loss]() {
    NoGradGuard guard;
    const double v = static_cast<double>(loss().item());
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
    return v;
  };

  zero_grads(params);
  double base_loss = 0;
  {
    const Tensor l = loss();
    base_loss = std::abs(static_cast<double>(l.item()));
    if (!std::isfinite(base_loss)) throw std::runtime_error("grad_check: loss is not finite");
    l.backward();
  }
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].values();
    std::vector<std::size_t> entries(values.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (options.max_entries_per_parameter != 0 && entries.size() > options.max_entries_per_parameter) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_parameter);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t i : entries) {
      const Real saved = values[i];
      auto central = [&](double h) {
        values[i] = static_cast<Real>(saved + h);
        const double up = evaluate();
        values[i] = static_cast<Real>(saved - h);
        const double down = evaluate();
        values[i] = saved;
        return (up - down) / (2 * h);
      };
      auto relative = [](double x, double y) { return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-8}); };
      double prev = central(eps0);
      double numeric = prev;
      double best_gap = std::numeric_limits<double>::infinity();
      bool refined = false;
      for (double h = eps0 / 10; h >= eps_min * (1 - 1e-9); h /= 10) {
        const double cur = central(h);
        // cancellation noise in (f(x+h) - f(x-h)) / 2h grows like u |f| / h
        const double gap = std::abs(cur - prev) + 64 * std::numeric_limits<Real>::epsilon() * base_loss / h;
        if (gap < best_gap) {
          best_gap = gap;
          refined = h < eps0 / 10;
          numeric = prev;
        }
        if (gap <= options.agreement * std::abs(prev)) break;
        prev = cur;
      }
      if (refined) ++result.entries_refined;
      const double a = static_cast<double>(analytic[pi][i]);
      const double rel = relative(a, numeric);
      ++result.entries_checked;
      if (rel > result.max_rel_error || result.entries_checked == 1) {
        result.max_rel_error = rel;
        result.worst_parameter = params[pi].name();
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  zero_grads(params);
  return result;
}

}  // namespace astreg::nn
