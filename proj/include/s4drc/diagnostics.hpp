#pragma once

#include <functional>
#include <string_view>

namespace s4drc {

/// Receives non-fatal warnings (out-of-range input, unexpected sample rate).
/// The default handler writes to stderr. Passing an empty function restores it.
using WarningHandler = std::function<void(std::string_view)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace s4drc
