#pragma once

#include <stdexcept>
#include <string>

namespace bharp {

// Every failure raised by the library carries a coarse category plus the
// name of the block (parameter, key, file, ...) that triggered it.
enum class ErrorKind {
  kDimension,
  kDomain,
  kNumerical,
  kConfig,
  kIo,
  kRefused,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string where, const std::string& message)
      : std::runtime_error(where.empty() ? message : where + ": " + message),
        kind_(kind),
        where_(std::move(where)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  std::string where_;
};

}  // namespace bharp
