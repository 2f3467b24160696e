#ifndef OPC_ERROR_HPP_
#define OPC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace opc {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  config = 2,    // bad flags, unknown task/preset, dimension mismatch
  missing = 3,   // absent or unreadable upstream artifact
  numeric = 4,   // NaN/Inf, shape mismatch inside a computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw Error(ErrorKind::config, msg);
}
[[noreturn]] inline void fail_missing(const std::string& msg) {
  throw Error(ErrorKind::missing, msg);
}
[[noreturn]] inline void fail_numeric(const std::string& msg) {
  throw Error(ErrorKind::numeric, msg);
}

}  // namespace opc

#endif  // OPC_ERROR_HPP_
