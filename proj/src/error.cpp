#include "latentkit/error.hpp"

#include <iostream>

namespace latentkit {

namespace {
WarningSink& sink() {
  static WarningSink instance;
  return instance;
}
}  // namespace

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::out_of_range: return "out of range";
    case ErrorCode::unsupported_model: return "unsupported model";
    case ErrorCode::numeric: return "numeric failure";
    case ErrorCode::io: return "i/o failure";
    case ErrorCode::config: return "invalid configuration";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

void set_warning_sink(WarningSink s) { sink() = std::move(s); }

void warn(const std::string& message) {
  if (sink()) {
    sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace latentkit
