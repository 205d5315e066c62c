#pragma once

// Minimal leveled logging to stderr, controlled by the PPAI_LOG environment
// variable: "quiet" (errors only), "info" (default), "debug".

#include <cstdlib>
#include <iostream>
#include <string>

namespace ppai::log {

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("PPAI_LOG");
    if (!env) return Level::Info;
    std::string v(env);
    if (v == "quiet") return Level::Quiet;
    if (v == "debug") return Level::Debug;
    return Level::Info;
  }();
  return lvl;
}

inline void error(const std::string& msg) { std::cerr << "[error] " << msg << "\n"; }

inline void info(const std::string& msg) {
  if (level() >= Level::Info) std::cerr << "[info] " << msg << "\n";
}

inline void debug(const std::string& msg) {
  if (level() >= Level::Debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace ppai::log
