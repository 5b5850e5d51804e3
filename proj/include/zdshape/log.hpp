#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace zdshape {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from the ZDSHAPE_LOG environment variable:
// quiet | warn (default) | info | debug.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ZDSHAPE_LOG");
    if (env == nullptr) return LogLevel::warn;
    const std::string v(env);
    if (v == "quiet") return LogLevel::quiet;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log_message(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  const std::lock_guard<std::mutex> lock(mu);
  const char* tag = lvl == LogLevel::warn ? "warn" : lvl == LogLevel::info ? "info" : "debug";
  std::cerr << "[zdshape:" << tag << "] " << msg << '\n';
}

inline void log_warn(const std::string& msg) { log_message(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace zdshape
