#pragma once

#include <filesystem>
#include <memory>

#include "astreg/gnn/regressor.hpp"
#include "astreg/model.hpp"
#include "astreg/nn/checkpoint.hpp"
#include "astreg/seqmodels/dual_transformer.hpp"
#include "astreg/seqmodels/tbast.hpp"
#include "astreg/treemodels/code2vec.hpp"
#include "astreg/treemodels/tbcnn.hpp"

namespace astreg {

/// Unprepared model of cfg.kind; call prepare() or restore() before use.
inline std::unique_ptr<Regressor> make_regressor(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::gcn:
    case ModelKind::gat:
    case ModelKind::sage:
    case ModelKind::gin: return std::make_unique<gnn::GraphRegressor>(cfg);
    case ModelKind::tbcnn: return std::make_unique<treemodels::TbcnnRegressor>(cfg);
    case ModelKind::code2vec: return std::make_unique<treemodels::Code2VecRegressor>(cfg);
    case ModelKind::tbast: return std::make_unique<seqmodels::TbastModel>(cfg);
    case ModelKind::dual: return std::make_unique<seqmodels::DualTransformer>(cfg);
  }
  throw std::invalid_argument("make_regressor: unknown model kind");
}

/// Structurally identical model with copied parameter and buffer values.
inline std::unique_ptr<Regressor> clone_regressor(const Regressor& model) {
  auto copy = make_regressor(model.config());
  copy->restore(model.state());
  auto dst = copy->checkpoint_tensors();
  nn::copy_parameter_values(model.checkpoint_tensors(), dst);
  return copy;
}

/// Writes model state, parameters and buffers; `extra` is merged into the manifest config.
inline void save_model(const Regressor& model, const std::filesystem::path& dir, nlohmann::json extra = nlohmann::json::object()) {
  extra["model_state"] = model.state();
  nn::save_checkpoint(dir, extra, model.checkpoint_tensors());
}

inline std::unique_ptr<Regressor> load_model(const std::filesystem::path& dir, nlohmann::json* config_out = nullptr) {
  const auto manifest = nn::read_checkpoint_manifest(dir);
  const auto& config = manifest.at("config");
  const auto& state = config.at("model_state");
  auto model = make_regressor(ModelConfig::from_json(state.at("config")));
  model->restore(state);
  auto tensors = model->checkpoint_tensors();
  nn::load_checkpoint_tensors(dir, tensors);
  if (config_out) *config_out = config;
  return model;
}

}  // namespace astreg
