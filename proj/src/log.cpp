#include "eyemark/log.hpp"

#include <cstdlib>
#include <iostream>

namespace eyemark {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("EYEMARK_LOG");
    if (!env) return LogLevel::kInfo;
    std::string s(env);
    if (s == "error") return LogLevel::kError;
    if (s == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log_line(LogLevel level, const std::string& msg) {
  const char* tag = level == LogLevel::kError ? "error" : (level == LogLevel::kDebug ? "debug" : "info");
  std::cerr << "[" << tag << "] " << msg << "\n";
}

}  // namespace eyemark
