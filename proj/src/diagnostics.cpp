#include "s4drc/diagnostics.hpp"

#include <iostream>
#include <mutex>
#include <utility>

#include "s4drc/error.hpp"

namespace s4drc {

namespace {

std::mutex g_handler_mutex;
WarningHandler g_handler;

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidOrder: return "InvalidOrder";
    case ErrorCode::StateMismatch: return "StateMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::SilentReference: return "SilentReference";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::MultichannelInput: return "MultichannelInput";
    case ErrorCode::Corrupt: return "Corrupt";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_handler_mutex);
  return std::exchange(g_handler, std::move(handler));
}

void warn(std::string_view message) {
  std::lock_guard lock(g_handler_mutex);
  if (g_handler) {
    g_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace s4drc
