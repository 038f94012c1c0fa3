#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace spherecat::logging {

enum class Level { Debug = 0, Info = 1, Warning = 2, Error = 3 };

// Verbosity comes from SPHERECAT_LOG (debug|info|warning|error), default info.
inline Level threshold() {
  static Level lvl = [] {
    const char* env = std::getenv("SPHERECAT_LOG");
    if (env == nullptr) return Level::Info;
    if (std::strcmp(env, "debug") == 0) return Level::Debug;
    if (std::strcmp(env, "info") == 0) return Level::Info;
    if (std::strcmp(env, "warning") == 0 || std::strcmp(env, "warn") == 0) return Level::Warning;
    if (std::strcmp(env, "error") == 0) return Level::Error;
    return Level::Info;
  }();
  return lvl;
}

inline void write(Level lvl, const std::string& msg) {
  if (static_cast<int>(lvl) < static_cast<int>(threshold())) return;
  static const char* names[] = {"debug", "info", "warning", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warning(const std::string& m) { write(Level::Warning, m); }
inline void error(const std::string& m) { write(Level::Error, m); }

}  // namespace spherecat::logging
