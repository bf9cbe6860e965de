#include "s4drc/model.hpp"

#include <cmath>

namespace s4drc {

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v < 1) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be positive");
  };
  positive(num_blocks, "num_blocks");
  positive(channels, "channels");
  if (ssm_order < 1) throw Error(ErrorCode::InvalidOrder, "ssm_order must be positive");
  positive(control_embedding_dim, "control_embedding_dim");
  for (Index h : control_hidden) positive(h, "control_hidden");
  if (control_dim != 2) {
    throw Error(ErrorCode::InvalidArgument, "control_dim must be 2 (peak reduction, limit switch)");
  }
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw Error(ErrorCode::InvalidArgument, "sample_rate must be positive");
  }
}

std::string ModelConfig::name() const {
  return "ssm-c" + std::to_string(channels) + "-f" + std::to_string(ssm_order);
}

void ControlVector::validate() const {
  if (!(peak_reduction >= 0.0 && peak_reduction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "peak_reduction must lie in [0, 1]");
  }
  if (limit_switch != 0.0 && limit_switch != 1.0) {
    throw Error(ErrorCode::InvalidArgument, "limit_switch must be 0 or 1");
  }
}

}  // namespace s4drc
