#pragma once

#include <string>

namespace cargopatch {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

// Global verbosity; messages below this level are dropped.
void set_log_level(LogLevel level);
LogLevel log_level();

// Writes "level ts module message" to stderr.
void log_msg(LogLevel level, const std::string& module, const std::string& message);

inline void log_debug(const std::string& module, const std::string& msg) {
  log_msg(LogLevel::debug, module, msg);
}
inline void log_info(const std::string& module, const std::string& msg) {
  log_msg(LogLevel::info, module, msg);
}
inline void log_warn(const std::string& module, const std::string& msg) {
  log_msg(LogLevel::warn, module, msg);
}
inline void log_error(const std::string& module, const std::string& msg) {
  log_msg(LogLevel::error, module, msg);
}

}  // namespace cargopatch
