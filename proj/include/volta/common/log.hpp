// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

// Plain-string logging entry points. Translation units that include libtorch
// cannot include spdlog directly (the bundled fmt headers clash).
namespace volta::log {

void info(const std::string& message);
void warn(const std::string& message);
/// "debug", "info", "warn", "error" or "off".
void set_level(const std::string& level);

}  // namespace volta::log
