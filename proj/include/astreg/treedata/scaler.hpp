#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "astreg/treedata/sample.hpp"

namespace astreg::treedata {

enum class ScalerScheme { log_min_max, min_max, identity };

inline std::string to_string(ScalerScheme s) {
  switch (s) {
    case ScalerScheme::log_min_max: return "log_min_max";
    case ScalerScheme::min_max: return "min_max";
    case ScalerScheme::identity: return "identity";
  }
  return "?";
}

inline ScalerScheme scaler_scheme_from_string(const std::string& s) {
  if (s == "log_min_max") return ScalerScheme::log_min_max;
  if (s == "min_max") return ScalerScheme::min_max;
  if (s == "identity") return ScalerScheme::identity;
  throw std::invalid_argument(fmt::format("unknown scaler scheme '{}'", s));
}

/// Maps raw durations onto roughly [0, 1]. log_min_max works in log space.
class TargetScaler {
 public:
  TargetScaler() = default;
  explicit TargetScaler(ScalerScheme scheme) : scheme_(scheme) {}

  ScalerScheme scheme() const { return scheme_; }
  double fitted_min() const { return min_; }
  double fitted_max() const { return max_; }
  bool degenerate() const { return degenerate_; }

  void fit(const std::vector<double>& raw) {
    if (raw.empty()) throw std::invalid_argument("TargetScaler::fit: no values");
    std::vector<double> xs;
    xs.reserve(raw.size());
    for (double x : raw) xs.push_back(forward_space(x));
    min_ = *std::min_element(xs.begin(), xs.end());
    max_ = *std::max_element(xs.begin(), xs.end());
    degenerate_ = !(max_ > min_);
    if (degenerate_ && scheme_ != ScalerScheme::identity) {
      spdlog::warn("target scaler fitted on a degenerate range ({}); all targets map to 0.5", min_);
    }
  }

  double transform(double raw) const {
    if (scheme_ == ScalerScheme::identity) return raw;
    const double x = forward_space(raw);
    if (degenerate_) return 0.5;
    return (x - min_) / (max_ - min_);
  }

  double inverse_transform(double scaled) const {
    if (scheme_ == ScalerScheme::identity) return scaled;
    const double x = degenerate_ ? min_ : min_ + scaled * (max_ - min_);
    return scheme_ == ScalerScheme::log_min_max ? std::exp(x) : x;
  }

  nlohmann::json to_json() const {
    return {{"scheme", to_string(scheme_)}, {"fitted_min", min_}, {"fitted_max", max_}, {"degenerate", degenerate_}};
  }

  static TargetScaler from_json(const nlohmann::json& j) {
    TargetScaler s(scaler_scheme_from_string(j.at("scheme").get<std::string>()));
    s.min_ = j.at("fitted_min").get<double>();
    s.max_ = j.at("fitted_max").get<double>();
    s.degenerate_ = j.at("degenerate").get<bool>();
    return s;
  }

  bool operator==(const TargetScaler&) const = default;

 private:
  double forward_space(double raw) const {
    if (scheme_ == ScalerScheme::log_min_max) {
      if (!(raw > 0.0)) throw std::domain_error(fmt::format("log scaling needs positive durations, got {}", raw));
      return std::log(raw);
    }
    return raw;
  }

  ScalerScheme scheme_ = ScalerScheme::log_min_max;
  double min_ = 0.0;
  double max_ = 1.0;
  bool degenerate_ = false;
};

/// Fits on the median durations of `train` only, then writes `target` into
/// every record of `train` and of each sequence in `apply_to`.
inline TargetScaler fit_and_apply_scaler(std::vector<SampleRecord>& train,
                                         const std::vector<std::vector<SampleRecord>*>& apply_to,
                                         ScalerScheme scheme = ScalerScheme::log_min_max) {
  std::vector<double> raw;
  raw.reserve(train.size());
  for (const auto& r : train) raw.push_back(raw_duration(r));
  TargetScaler scaler(scheme);
  scaler.fit(raw);
  for (auto& r : train) r.target = scaler.transform(raw_duration(r));
  for (auto* seq : apply_to)
    for (auto& r : *seq) r.target = scaler.transform(raw_duration(r));
  return scaler;
}

inline void apply_scaler(const TargetScaler& scaler, std::vector<SampleRecord>& records) {
  for (auto& r : records) r.target = scaler.transform(raw_duration(r));
}

}  // namespace astreg::treedata
