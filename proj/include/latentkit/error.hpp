#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace latentkit {

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  out_of_range,
  unsupported_model,
  numeric,
  io,
  config,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the library. The C API maps `code()` onto its
// status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace latentkit
