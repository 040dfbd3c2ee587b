#include "lotcrs/logging.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace lotcrs::log {

namespace {

Level g_level = [] {
  const char* env = std::getenv("LOTCRS_LOG");
  if (env == nullptr) return Level::kWarn;
  const std::string v(env);
  if (v == "error") return Level::kError;
  if (v == "warn") return Level::kWarn;
  if (v == "info") return Level::kInfo;
  if (v == "debug") return Level::kDebug;
  return Level::kWarn;
}();

const char* tag(Level lv) {
  switch (lv) {
    case Level::kError: return "error";
    case Level::kWarn: return "warn";
    case Level::kInfo: return "info";
    case Level::kDebug: return "debug";
  }
  return "?";
}

std::mutex g_mutex;

}  // namespace

Level level() { return g_level; }
void set_level(Level lv) { g_level = lv; }

void write(Level lv, const std::string& msg) {
  if (static_cast<int>(lv) > static_cast<int>(g_level)) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[lotcrs:" << tag(lv) << "] " << msg << "\n";
}

}  // namespace lotcrs::log
