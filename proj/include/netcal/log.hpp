#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace netcal::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity from the NETCAL_LOG environment variable
/// (error | warn | info | debug); defaults to info.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("NETCAL_LOG");
    if (!env) return Level::info;
    if (std::strcmp(env, "error") == 0) return Level::error;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::info;
  }();
  return level;
}

inline void write(Level level, const std::string& message) {
  if (level > threshold()) return;
  const char* tag = "info";
  if (level == Level::error) tag = "error";
  else if (level == Level::warn) tag = "warn";
  else if (level == Level::debug) tag = "debug";
  std::fprintf(stderr, "[netcal %s] %s\n", tag, message.c_str());
}

inline void error(const std::string& m) { write(Level::error, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void debug(const std::string& m) { write(Level::debug, m); }

}  // namespace netcal::log
