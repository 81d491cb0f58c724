#pragma once

#include <stdexcept>
#include <string>

namespace cellgnn {

// Categories double as CLI exit codes.
enum class ErrorKind : int { Config = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}

[[noreturn]] inline void data_error(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}

[[noreturn]] inline void numeric_error(const std::string& msg) {
  throw Error(ErrorKind::Numeric, msg);
}

}  // namespace cellgnn
