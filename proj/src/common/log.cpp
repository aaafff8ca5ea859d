// SPDX-License-Identifier: Apache-2.0
#include "volta/common/log.hpp"

#include <spdlog/spdlog.h>

#include "volta/common/error.hpp"

namespace volta::log {

void info(const std::string& message) { spdlog::info("{}", message); }
void warn(const std::string& message) { spdlog::warn("{}", message); }

void set_level(const std::string& level) {
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") throw ConfigError("unknown log level: " + level);
  spdlog::set_level(parsed);
}

}  // namespace volta::log
