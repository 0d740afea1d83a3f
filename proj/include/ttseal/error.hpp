#pragma once

#include <stdexcept>
#include <string>

namespace ttseal {

// Error categories. Each one maps to a distinct process exit code in the CLI.
enum class ErrorKind {
  config,
  io,
  shape,
  degenerate,
  empty,
  infeasible,
  authentication,
  wrong_key,
  format,
  no_tt_cores,
  size_guard,
  unknown_core,
  stale_cache,
  internal,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::shape: return "shape";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::empty: return "empty";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::authentication: return "authentication";
    case ErrorKind::wrong_key: return "wrong-key";
    case ErrorKind::format: return "format";
    case ErrorKind::no_tt_cores: return "no-tt-cores";
    case ErrorKind::size_guard: return "size-guard";
    case ErrorKind::unknown_core: return "unknown-core";
    case ErrorKind::stale_cache: return "stale-cache";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

// Process exit status for each category; 0 is success, 1 is left for
// failures outside the library (bad flags are reported as config).
inline int exit_code(ErrorKind kind) { return 2 + static_cast<int>(kind); }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ttseal
