#pragma once

#include <string>

namespace x0t {

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

// Suppress/restore info output (CLI --quiet, tests).
void set_log_quiet(bool quiet);

}  // namespace x0t
