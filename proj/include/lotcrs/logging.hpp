#pragma once

#include <string>

namespace lotcrs::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Active level comes from LOTCRS_LOG={error|warn|info|debug}; default warn.
Level level();
void set_level(Level lv);

void write(Level lv, const std::string& msg);

inline void error(const std::string& msg) { write(Level::kError, msg); }
inline void warn(const std::string& msg) { write(Level::kWarn, msg); }
inline void info(const std::string& msg) { write(Level::kInfo, msg); }
inline void debug(const std::string& msg) { write(Level::kDebug, msg); }

}  // namespace lotcrs::log
