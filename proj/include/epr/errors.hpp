#pragma once
// Error taxonomy shared by the library and the CLI.  Each class maps to a
// stable process exit code so shell pipelines can branch on failure kind.

#include <stdexcept>
#include <string>

namespace epr {

enum class ErrorCode : int {
  config = 2,     // malformed configuration / parameter domain violations
  data = 3,       // malformed or inconsistent input data
  numerical = 4,  // solver / sampler breakdown
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::config: return "config";
    case ErrorCode::data: return "data";
    case ErrorCode::numerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorCode::config, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(ErrorCode::numerical, msg) {}
};

}  // namespace epr
