#pragma once

#include <chrono>
#include <vector>

#include "astreg/models.hpp"
#include "astreg/nn/grad_check.hpp"
#include "astreg/treedata/scaler.hpp"
#include "astreg/treedata/synth.hpp"

namespace astreg::harness {

struct ModelGradCheck {
  ModelKind kind{};
  nn::GradCheckResult result;
  std::size_t parameters = 0;
  double seconds = 0.0;
};

/// End-to-end check of the MSE loss of one synthetic sample in evaluation mode
/// (dropout off, batch norm on running statistics).
inline ModelGradCheck gradcheck_model(const ModelConfig& cfg, const nn::GradCheckOptions& options, std::uint64_t seed = 0) {
  const auto start = std::chrono::steady_clock::now();
  auto records = treedata::generate_synthetic(8, seed);
  treedata::fit_and_apply_scaler(records, {});
  auto model = make_regressor(cfg);
  model->prepare(records, seed);
  const EncodedPtr encoded = model->encode(records.front());
  const Encoded* ptr = encoded.get();
  const Real target = static_cast<Real>(records.front().target);
  auto loss = [&] {
    return nn::mse_loss(model->forward(std::span<const Encoded* const>(&ptr, 1), RunContext{}), std::span<const Real>(&target, 1));
  };
  ModelGradCheck out;
  out.kind = cfg.kind;
  out.parameters = nn::parameter_count(model->parameters());
  out.result = nn::grad_check(loss, model->parameters(), options);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace astreg::harness
