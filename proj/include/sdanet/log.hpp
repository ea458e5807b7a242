// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal stderr logging. Verbosity comes from the SDANET_LOG environment
// variable: quiet | warn | info (default) | debug.

#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace sdanet::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

inline Level threshold() {
  static const Level lvl = [] {
    const char* v = std::getenv("SDANET_LOG");
    const std::string_view s = v ? v : "info";
    if (s == "quiet") return Level::quiet;
    if (s == "warn") return Level::warn;
    if (s == "debug") return Level::debug;
    return Level::info;
  }();
  return lvl;
}

inline void write(Level l, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(l) <= static_cast<int>(threshold())) std::cerr << '[' << tag << "] " << msg << '\n';
}

inline void warn(const std::string& m) { write(Level::warn, "warn", m); }
inline void info(const std::string& m) { write(Level::info, "info", m); }
inline void debug(const std::string& m) { write(Level::debug, "debug", m); }

}  // namespace sdanet::log
