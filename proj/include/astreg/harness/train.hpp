#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <spdlog/spdlog.h>

#include "astreg/model.hpp"
#include "astreg/nn/adam.hpp"

namespace astreg::harness {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  std::size_t batch_size = 4;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean per-sample loss of each epoch
};

/// Called after every epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Adam on MSE over mini-batches in a seeded order; the model must already be
/// prepared. Shuffling and dropout draw from streams derived from `seed`.
inline TrainResult train_model(Regressor& model, const std::vector<SampleRecord>& train, const TrainConfig& cfg,
                               std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (train.empty()) throw std::invalid_argument("train_model: no training records");

  std::vector<EncodedPtr> encoded;
  encoded.reserve(train.size());
  for (const auto& r : train) encoded.push_back(model.encode(r));

  nn::Adam adam(cfg.learning_rate);
  ParameterList params = model.parameters();
  nn::zero_grads(params);
  std::mt19937_64 order_rng(seed * 2 + 1);
  nn::Rng dropout_rng(seed * 2 + 2);
  const RunContext ctx{true, &dropout_rng};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Encoded*> batch;
      std::vector<Real> targets;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(encoded[order[i]].get());
        targets.push_back(static_cast<Real>(train[order[i]].target));
      }
      const Tensor loss = nn::mse_loss(model.forward(batch, ctx), targets);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingError(fmt::format("non-finite loss at epoch {} batch {}", epoch, b));
      }
      loss.backward();
      try {
        adam.step(params);
      } catch (const nn::NonFiniteGradient& e) {
        throw TrainingError(fmt::format("{} at epoch {} batch {}", e.what(), epoch, b));
      }
      total += value * static_cast<double>(end - start);
    }
    result.loss_history.push_back(total / static_cast<double>(train.size()));
    if (on_epoch) on_epoch(epoch, result.loss_history.back());
  }
  return result;
}

/// Evaluation-mode predictions in record order.
inline std::vector<double> predict_all(Regressor& model, const std::vector<SampleRecord>& records) {
  nn::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const EncodedPtr e = model.encode(r);
    const Encoded* ptr = e.get();
    out.push_back(static_cast<double>(model.forward(std::span<const Encoded* const>(&ptr, 1), RunContext{}).item()));
  }
  return out;
}

inline std::vector<double> targets_of(const std::vector<SampleRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.target);
  return out;
}

}  // namespace astreg::harness
