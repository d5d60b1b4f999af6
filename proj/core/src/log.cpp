#include "capsule_nlu/log.hpp"

#include <cstdlib>
#include <cstring>

namespace capsnlu::log {

namespace {

Level parse_env() {
  const char* v = std::getenv("CAPSULE_NLU_LOG");
  if (v == nullptr) return Level::kError;
  if (std::strcmp(v, "debug") == 0) return Level::kDebug;
  if (std::strcmp(v, "info") == 0) return Level::kInfo;
  return Level::kError;
}

Level& current() {
  static Level lv = parse_env();
  return lv;
}

}  // namespace

Level level() { return current(); }
void set_level(Level lv) { current() = lv; }

void error(const std::string& msg) {
  std::fprintf(stderr, "[error] %s\n", msg.c_str());
}

void info(const std::string& msg) {
  if (current() >= Level::kInfo) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void debug(const std::string& msg) {
  if (current() >= Level::kDebug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

}  // namespace capsnlu::log
