#pragma once

#include <stdexcept>
#include <string>

namespace graphsym {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Domain,       // argument outside an operation's domain
  Structural,   // malformed netlist or graph (cycle, multiple drivers, shape mismatch)
  Consistency,  // two artifacts that should agree do not
  Library,      // cell missing from the library, bad library file
  Checkpoint,   // bad checkpoint or normalization mismatch
  Pipeline,     // stage inputs carry mismatching fingerprints
  Format,       // unreadable file
  Numeric       // non-finite values during training or inference
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Structural: return "structural error";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Library: return "library error";
    case ErrorKind::Checkpoint: return "checkpoint error";
    case ErrorKind::Pipeline: return "pipeline error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Numeric: return "numeric error";
  }
  return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace graphsym
