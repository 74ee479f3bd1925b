#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace nodulekit {

/// Process-wide stderr logger. Data never goes through it.
std::shared_ptr<spdlog::logger> logger();

void set_log_level(spdlog::level::level_enum level);

}  // namespace nodulekit
