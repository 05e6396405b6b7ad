#pragma once

#include <stdexcept>
#include <string>

namespace hcan {

// Error categories map onto CLI exit codes: config/usage -> 1, data -> 2,
// numeric/verification -> 3.
enum class ErrorKind { Usage, Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

}  // namespace hcan
