#pragma once
// Checkpoints: a JSON manifest (names, shapes, dtype, model config) plus one
// little-endian raw blob per tensor.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "astreg/nn/tensor.hpp"

namespace astreg::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointSchema = "astreg-checkpoint/1.0.0";

namespace detail {

inline std::string blob_name(std::size_t index, const std::string& name) {
  std::string safe = name;
  std::replace_if(safe.begin(), safe.end(), [](char c) { return !(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_'); }, '_');
  return fmt::format("{:04d}_{}.bin", index, safe);
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const nlohmann::json& config, const ParameterList& tensors) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["schema"] = kCheckpointSchema;
  manifest["dtype"] = sizeof(Real) == 8 ? "float64" : "float32";
  manifest["config"] = config;
  manifest["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& p = tensors[i];
    const std::string file = detail::blob_name(i, p.name());
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw CheckpointError(fmt::format("cannot write {}", (dir / file).string()));
    for (Real v : p.values()) detail::write_le(out, v);
    manifest["tensors"].push_back({{"name", p.name()}, {"shape", {p.rows(), p.cols()}}, {"file", file}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw CheckpointError(fmt::format("cannot write {}", (dir / "manifest.json").string()));
  out << manifest.dump(2) << '\n';
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError(fmt::format("no checkpoint manifest in {}", dir.string()));
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("schema", "") != kCheckpointSchema) {
    throw CheckpointError(fmt::format("unsupported checkpoint schema '{}'", manifest.value("schema", "")));
  }
  return manifest;
}

/// Loads tensor values into `tensors`, matched by position and name. Any
/// shape, name or dtype mismatch is rejected before values are touched.
inline void load_checkpoint_tensors(const std::filesystem::path& dir, ParameterList& tensors) {
  const nlohmann::json manifest = read_checkpoint_manifest(dir);
  const std::string dtype = sizeof(Real) == 8 ? "float64" : "float32";
  if (manifest.at("dtype") != dtype) {
    throw CheckpointError(fmt::format("checkpoint dtype {} does not match build dtype {}", manifest.at("dtype").get<std::string>(), dtype));
  }
  const auto& entries = manifest.at("tensors");
  if (entries.size() != tensors.size()) {
    throw CheckpointError(fmt::format("checkpoint has {} tensors, model expects {}", entries.size(), tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = entries[i];
    const auto shape = e.at("shape").get<std::array<std::size_t, 2>>();
    if (e.at("name") != tensors[i].name() || shape != tensors[i].tensor().shape()) {
      throw CheckpointError(fmt::format("checkpoint tensor {} {}x{} does not match model tensor {} {}",
                                        e.at("name").get<std::string>(), shape[0], shape[1], tensors[i].name(),
                                        tensors[i].tensor().shape_str()));
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto file = dir / entries[i].at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("missing blob {}", file.string()));
    auto values = tensors[i].values();
    for (auto& v : values) v = detail::read_le<Real>(in);
    if (!in) throw CheckpointError(fmt::format("blob {} is truncated", file.string()));
  }
}

}  // namespace astreg::nn
