#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

namespace astreg::harness {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double pearson = 0.0;
  bool pearson_degenerate = false;  // zero variance on either side; pearson reported as 0
};

/// mse = mean((t - p)^2), mae = mean(|t - p|), pearson with population moments.
inline Metrics compute_metrics(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument(fmt::format("compute_metrics: {} targets vs {} predictions", truth.size(), predicted.size()));
  }
  if (truth.empty()) throw std::invalid_argument("compute_metrics: no samples");
  const double n = static_cast<double>(truth.size());
  Metrics m;
  double mt = 0, mp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - predicted[i];
    m.mse += d * d;
    m.mae += std::abs(d);
    mt += truth[i];
    mp += predicted[i];
  }
  m.mse /= n;
  m.mae /= n;
  mt /= n;
  mp /= n;
  double stt = 0, spp = 0, stp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double a = truth[i] - mt, b = predicted[i] - mp;
    stt += a * a;
    spp += b * b;
    stp += a * b;
  }
  if (truth.size() < 2 || stt <= 0 || spp <= 0) {
    m.pearson_degenerate = true;
    m.pearson = 0.0;
  } else {
    m.pearson = std::clamp(stp / std::sqrt(stt * spp), -1.0, 1.0);
  }
  return m;
}

/// Mean and sample standard deviation (n - 1); a single value has std 0 and is flagged.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  bool single = false;
};

inline Summary summarize(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) {
    s.single = true;
    return s;
  }
  double ss = 0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

/// Ordinary least squares y = slope * x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;  // x has no spread; slope 0, intercept mean(y)
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("least_squares: need equal, non-empty inputs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  if (sxx <= 0) {
    f.degenerate = true;
    f.intercept = my;
    return f;
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace astreg::harness
