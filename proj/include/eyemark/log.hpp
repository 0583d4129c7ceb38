#pragma once

#include <sstream>
#include <string>

namespace eyemark {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from EYEMARK_LOG={error,info,debug}; default info.
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

#define EYEMARK_LOG_AT(level, expr)                      \
  do {                                                   \
    if (::eyemark::log_level() >= (level)) {             \
      std::ostringstream os_;                            \
      os_ << expr;                                       \
      ::eyemark::log_line((level), os_.str());           \
    }                                                    \
  } while (0)

#define LOG_ERROR(expr) EYEMARK_LOG_AT(::eyemark::LogLevel::kError, expr)
#define LOG_INFO(expr) EYEMARK_LOG_AT(::eyemark::LogLevel::kInfo, expr)
#define LOG_DEBUG(expr) EYEMARK_LOG_AT(::eyemark::LogLevel::kDebug, expr)

}  // namespace eyemark
