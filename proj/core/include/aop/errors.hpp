#pragma once

#include <stdexcept>
#include <string>

namespace aop {

enum class ErrorKind {
  Config,        // invalid configuration values
  Precondition,  // caller violated an operation precondition
  Parse,         // malformed structured data (manifest, dataset, model output)
  Validation,    // well-formed data violating a domain invariant
  Version,       // schema version mismatch
  Transport,     // backend unreachable or retries exhausted
  Protocol,      // backend reachable but payload non-conforming
  Annotation,    // segment annotation failed after the corrective retry
  Ingestion,     // transcript or manifest ingestion failure
  Dispatch,      // unknown or ill-formed tool call
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace aop
