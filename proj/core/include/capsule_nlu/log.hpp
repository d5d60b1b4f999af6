#pragma once

#include <cstdio>
#include <string>

namespace capsnlu::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

// Verbosity comes from the CAPSULE_NLU_LOG environment variable
// (error|info|debug, default error). All output goes to stderr so stdout
// stays machine-readable.
Level level();
void set_level(Level lv);

void error(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace capsnlu::log
