#pragma once

// Binary weight container ("S4DC").
//
//   offset 0   magic "S4DC" (0x53 0x34 0x44 0x43)
//   offset 4   version, little-endian u32
//   offset 8   manifest length in bytes, little-endian u64
//   offset 16  manifest: UTF-8 JSON
//              { "config": {...}, "tensors": [ {name, shape, dtype, offset, length}, ... ] }
//   then       payload: little-endian tensor data; offsets are relative to
//              the payload start. dtype "f32" is IEEE-754 binary32, "c64" is
//              interleaved (real, imag) binary32 pairs.
//
// Tensor names and shapes are listed in docs/weights_format.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "s4drc/model.hpp"

namespace s4drc::weights_io {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr double kDefaultBatchNormEpsilon = 1e-5;

enum class DType { F32, C64 };

/// A raw tensor as stored: `data` holds 32-bit floats, two per element for C64.
/// Matrices are row-major in the payload.
struct Tensor {
  std::string name;
  std::vector<std::int64_t> shape;
  DType dtype = DType::F32;
  std::vector<float> data;

  std::int64_t element_count() const;
};

struct Container {
  nlohmann::json config;
  std::vector<Tensor> tensors;
};

/// Serialises tensors in the given order; byte-identical output for identical input.
std::vector<std::uint8_t> write_container(const Container& container);

/// Parses and bounds-checks the container framing. Throws BadMagic,
/// UnsupportedVersion or CorruptManifest.
Container read_container(std::span<const std::uint8_t> bytes);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Flattens weights into the documented tensor layout, with folded norms.
Container to_container(const ModelWeights<float>& weights);

/// Builds validated weights from a container. Raw batch-norm statistics
/// (`norm.running_mean`, `norm.running_var`, `norm.weight`, `norm.bias`) are
/// folded into scale/shift with the manifest's `bn_eps` (default 1e-5); when a
/// container also carries folded tensors they must agree.
/// Throws MissingTensor, ShapeMismatch, CorruptManifest.
ModelWeights<float> from_container(const Container& container);

std::vector<std::uint8_t> save(const ModelWeights<float>& weights);
ModelWeights<float> load(std::span<const std::uint8_t> bytes);

void save_file(const ModelWeights<float>& weights, const std::filesystem::path& path);
ModelWeights<float> load_file(const std::filesystem::path& path);

/// Total scalar parameter count. Complex values count twice; lambda, b, dt
/// and d count as trainable; a folded normalisation counts 2c per block.
std::int64_t count_params(const ModelConfig& config);

template <typename Scalar>
std::int64_t count_params(const ModelWeights<Scalar>& w) {
  std::int64_t total = w.expand_weight.size() + w.expand_bias.size();
  for (const auto& b : w.blocks) {
    total += b.mix_weight.size() + b.mix_bias.size() + b.prelu1.size() + b.prelu2.size();
    total += 2 * (b.ssm.lambda.size() + b.ssm.b.size() + b.ssm.c.size());
    total += b.ssm.d.size() + b.ssm.dt.size();
    total += b.norm_scale.size() + b.norm_shift.size();
    total += b.film_weight.size() + b.film_bias.size();
  }
  for (const auto& l : w.control_mlp) total += l.weight.size() + l.bias.size() + l.prelu.size();
  total += w.contract_weight.size() + w.contract_bias.size();
  return total;
}

}  // namespace s4drc::weights_io
