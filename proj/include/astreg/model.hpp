#pragma once
// Common surface of every regressor: configuration, per-sample encoding,
// batched forward pass and serialisable state.

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "astreg/nn/layers.hpp"
#include "astreg/treedata/paths.hpp"
#include "astreg/treedata/sample.hpp"

namespace astreg {

using nn::ParameterList;
using nn::Real;
using nn::RunContext;
using nn::Tensor;
using treedata::SampleRecord;

enum class ModelKind { gcn, gat, sage, gin, tbcnn, code2vec, tbast, dual };
enum class Preset { tiny, small, large };
enum class CrossDirection { bi, code2ast, ast2code };

inline constexpr ModelKind kAllModelKinds[] = {ModelKind::gcn,   ModelKind::gat,      ModelKind::sage,  ModelKind::gin,
                                               ModelKind::tbcnn, ModelKind::code2vec, ModelKind::tbast, ModelKind::dual};

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::sage: return "sage";
    case ModelKind::gin: return "gin";
    case ModelKind::tbcnn: return "tbcnn";
    case ModelKind::code2vec: return "code2vec";
    case ModelKind::tbast: return "tbast";
    case ModelKind::dual: return "dual";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : kAllModelKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument(fmt::format("unknown model kind '{}'", s));
}

inline bool is_graph_kind(ModelKind k) {
  return k == ModelKind::gcn || k == ModelKind::gat || k == ModelKind::sage || k == ModelKind::gin;
}

inline std::string to_string(Preset p) {
  switch (p) {
    case Preset::tiny: return "tiny";
    case Preset::small: return "small";
    case Preset::large: return "large";
  }
  return "?";
}

inline Preset preset_from_string(const std::string& s) {
  if (s == "tiny") return Preset::tiny;
  if (s == "small") return Preset::small;
  if (s == "large") return Preset::large;
  throw std::invalid_argument(fmt::format("unknown preset '{}'", s));
}

inline std::string to_string(CrossDirection d) {
  switch (d) {
    case CrossDirection::bi: return "bi";
    case CrossDirection::code2ast: return "code2ast";
    case CrossDirection::ast2code: return "ast2code";
  }
  return "?";
}

inline CrossDirection cross_direction_from_string(const std::string& s) {
  if (s == "bi") return CrossDirection::bi;
  if (s == "code2ast") return CrossDirection::code2ast;
  if (s == "ast2code") return CrossDirection::ast2code;
  throw std::invalid_argument(fmt::format("unknown cross direction '{}'", s));
}

struct ModelConfig {
  ModelKind kind = ModelKind::dual;
  Preset preset = Preset::tiny;

  // transformer encoders (tbast, dual)
  std::size_t blocks = 1;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t max_len = 256;
  std::size_t ff_multiplier = 4;
  double dropout = 0.1;
  CrossDirection cross_direction = CrossDirection::bi;
  bool sinusoidal_positions = false;

  // graph regressors
  std::size_t gnn_embed = 32;
  std::size_t gnn_hidden1 = 40;
  std::size_t gnn_hidden2 = 30;
  double gnn_dropout = 0.2;
  bool gnn_one_hot = false;

  // TBCNN
  std::size_t tbcnn_embed = 100;
  std::size_t tbcnn_conv = 300;

  // code2vec
  std::size_t code2vec_dim = 128;
  treedata::PathOptions paths{};

  std::size_t min_freq = 1;

  /// Transformer sizes per preset; d_ff is always ff_multiplier * dim.
  static ModelConfig make(ModelKind kind, Preset preset) {
    ModelConfig c;
    c.kind = kind;
    c.preset = preset;
    switch (preset) {
      case Preset::tiny:
        c.blocks = 1, c.dim = 64, c.heads = 4, c.max_len = 256;
        break;
      case Preset::small:
        c.blocks = 1, c.dim = 768, c.heads = 8, c.max_len = 2048;
        break;
      case Preset::large:
        c.blocks = 12, c.dim = 768, c.heads = 8, c.max_len = 2048;
        break;
    }
    return c;
  }

  void validate() const {
    if (heads == 0 || dim % heads != 0) throw std::invalid_argument(fmt::format("dim {} not divisible by heads {}", dim, heads));
    if (blocks == 0 || max_len < 2) throw std::invalid_argument("transformer needs >= 1 block and max_len >= 2");
    if (dropout < 0 || dropout >= 1 || gnn_dropout < 0 || gnn_dropout >= 1) throw std::invalid_argument("dropout must be in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},
            {"preset", to_string(preset)},
            {"blocks", blocks},
            {"dim", dim},
            {"heads", heads},
            {"max_len", max_len},
            {"ff_multiplier", ff_multiplier},
            {"dropout", dropout},
            {"cross_direction", to_string(cross_direction)},
            {"sinusoidal_positions", sinusoidal_positions},
            {"gnn_embed", gnn_embed},
            {"gnn_hidden1", gnn_hidden1},
            {"gnn_hidden2", gnn_hidden2},
            {"gnn_dropout", gnn_dropout},
            {"gnn_one_hot", gnn_one_hot},
            {"tbcnn_embed", tbcnn_embed},
            {"tbcnn_conv", tbcnn_conv},
            {"code2vec_dim", code2vec_dim},
            {"path_max_length", paths.max_length},
            {"path_max_width", paths.max_width},
            {"path_max_contexts", paths.max_contexts},
            {"path_seed", paths.seed},
            {"min_freq", min_freq}};
  }

  /// Starts from the preset defaults and overrides any field present in `j`.
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c = make(model_kind_from_string(j.value("kind", std::string("dual"))),
                         preset_from_string(j.value("preset", std::string("tiny"))));
    c.blocks = j.value("blocks", c.blocks);
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.max_len = j.value("max_len", c.max_len);
    c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
    c.dropout = j.value("dropout", c.dropout);
    c.cross_direction = cross_direction_from_string(j.value("cross_direction", to_string(c.cross_direction)));
    c.sinusoidal_positions = j.value("sinusoidal_positions", c.sinusoidal_positions);
    c.gnn_embed = j.value("gnn_embed", c.gnn_embed);
    c.gnn_hidden1 = j.value("gnn_hidden1", c.gnn_hidden1);
    c.gnn_hidden2 = j.value("gnn_hidden2", c.gnn_hidden2);
    c.gnn_dropout = j.value("gnn_dropout", c.gnn_dropout);
    c.gnn_one_hot = j.value("gnn_one_hot", c.gnn_one_hot);
    c.tbcnn_embed = j.value("tbcnn_embed", c.tbcnn_embed);
    c.tbcnn_conv = j.value("tbcnn_conv", c.tbcnn_conv);
    c.code2vec_dim = j.value("code2vec_dim", c.code2vec_dim);
    c.paths.max_length = j.value("path_max_length", c.paths.max_length);
    c.paths.max_width = j.value("path_max_width", c.paths.max_width);
    c.paths.max_contexts = j.value("path_max_contexts", c.paths.max_contexts);
    c.paths.seed = j.value("path_seed", c.paths.seed);
    c.min_freq = j.value("min_freq", c.min_freq);
    c.validate();
    return c;
  }
};

/// Model-specific preprocessed form of one sample.
struct Encoded {
  virtual ~Encoded() = default;
};

using EncodedPtr = std::shared_ptr<const Encoded>;

class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual ModelKind kind() const = 0;
  virtual const ModelConfig& config() const = 0;

  /// Builds vocabularies from the training records and initialises parameters from `seed`.
  virtual void prepare(const std::vector<SampleRecord>& train, std::uint64_t seed) = 0;

  /// Rebuilds vocabularies and parameter shapes from state(); values come from a checkpoint.
  virtual void restore(const nlohmann::json& state) = 0;
  virtual nlohmann::json state() const = 0;

  virtual EncodedPtr encode(const SampleRecord& record) const = 0;

  /// Predictions for a batch, one row per sample (B x 1).
  virtual Tensor forward(std::span<const Encoded* const> batch, const RunContext& ctx) = 0;

  virtual ParameterList parameters() const = 0;
  /// Non-trainable state that still belongs in checkpoints (batch-norm statistics).
  virtual ParameterList buffers() const { return {}; }

  ParameterList checkpoint_tensors() const {
    ParameterList all = parameters();
    for (auto& b : buffers()) all.push_back(b);
    return all;
  }

  Real predict(const SampleRecord& record) {
    nn::NoGradGuard guard;
    const EncodedPtr e = encode(record);
    const Encoded* ptr = e.get();
    return forward(std::span<const Encoded* const>(&ptr, 1), RunContext{}).item();
  }
};

template <typename T>
const T& encoded_as(const Encoded* e) {
  const auto* p = dynamic_cast<const T*>(e);
  if (!p) throw std::logic_error("sample was encoded by a different model kind");
  return *p;
}

}  // namespace astreg
