#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ast {

// All recoverable failures throw Error with a "stage: message" string so the
// CLI can report which pipeline stage failed.
class Error : public std::runtime_error {
 public:
  Error(const std::string& stage, const std::string& msg)
      : std::runtime_error(stage + ": " + msg) {}
};

[[noreturn]] inline void fail(const std::string& stage, const std::string& msg) {
  throw Error(stage, msg);
}

inline void require(bool cond, const std::string& stage, const std::string& msg) {
  if (!cond) fail(stage, msg);
}

// Verbosity from AST_LOG (0 = quiet, 1 = progress, 2 = chatty).
inline int log_level() {
  static int level = [] {
    const char* v = std::getenv("AST_LOG");
    return v ? std::atoi(v) : 0;
  }();
  return level;
}

inline void log(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << msg << "\n";
}

}  // namespace ast
