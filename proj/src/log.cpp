#include "x0t/log.hpp"

#include <cstdio>

namespace x0t {

namespace {
bool g_quiet = false;
}

void log_warn(const std::string& msg) {
    std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

void log_info(const std::string& msg) {
    if (g_quiet) {
        return;
    }
    std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void set_log_quiet(bool quiet) {
    g_quiet = quiet;
}

}  // namespace x0t
