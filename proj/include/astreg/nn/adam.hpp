#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "astreg/nn/tensor.hpp"

namespace astreg::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam. Moments are allocated lazily to match the parameter list.
class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterList& params) {
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (Real g : params[k].grad())
        if (!std::isfinite(static_cast<double>(g))) {
          throw NonFiniteGradient(fmt::format("non-finite gradient in parameter {}", params[k].name()));
        }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto values = params[k].values();
      auto grad = params[k].grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = beta1_ * m[i] + (1 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        values[i] = static_cast<Real>(static_cast<double>(values[i]) - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
      }
      params[k].zero_grad();
    }
  }

  std::size_t step_count() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  const std::vector<std::vector<double>>& first_moments() const { return first_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace astreg::nn
