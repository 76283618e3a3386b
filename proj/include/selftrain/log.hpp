#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace selftrain {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

namespace detail {
inline std::atomic<int>& log_threshold() {
  static std::atomic<int> threshold{static_cast<int>(LogLevel::kInfo)};
  return threshold;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_threshold() = static_cast<int>(level); }

inline bool log_enabled(LogLevel level) {
  return static_cast<int>(level) >= detail::log_threshold().load();
}

// Writes one line to stderr. Progress lines use "stage=... key=value" so they can be grepped.
inline void log_line(LogLevel level, std::string_view message) {
  if (!log_enabled(level)) return;
  static constexpr std::string_view kTags[] = {"DEBUG", "INFO", "WARN", "ERROR"};
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << message << '\n';
}

template <typename... Args>
void log_info(const Args&... args) {
  if (!log_enabled(LogLevel::kInfo)) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::kInfo, os.str());
}

template <typename... Args>
void log_warning(const Args&... args) {
  if (!log_enabled(LogLevel::kWarning)) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::kWarning, os.str());
}

template <typename... Args>
void log_debug(const Args&... args) {
  if (!log_enabled(LogLevel::kDebug)) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(LogLevel::kDebug, os.str());
}

}  // namespace selftrain
