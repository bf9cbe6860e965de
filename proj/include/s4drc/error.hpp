#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace s4drc {

enum class ErrorCode {
  // ssm / model
  NonFinite,
  Unstable,
  DimensionMismatch,
  InvalidOrder,
  StateMismatch,
  InvalidArgument,
  // weight container
  BadMagic,
  UnsupportedVersion,
  CorruptManifest,
  MissingTensor,
  ShapeMismatch,
  // metrics
  LengthMismatch,
  Empty,
  SilentReference,
  TooShort,
  // wav
  UnsupportedFormat,
  MultichannelInput,
  Corrupt,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace s4drc
