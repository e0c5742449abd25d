#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subm {

enum class ErrCode {
  precondition,
  dim_mismatch,
  bad_magic,
  bad_version,
  truncated,
  unknown_speaker,
  bad_request,
  store_error,
  diverged,
  io_error,
};

inline std::string_view to_string(ErrCode c) {
  switch (c) {
    case ErrCode::precondition: return "PRECONDITION";
    case ErrCode::dim_mismatch: return "DIM_MISMATCH";
    case ErrCode::bad_magic: return "BAD_MAGIC";
    case ErrCode::bad_version: return "BAD_VERSION";
    case ErrCode::truncated: return "TRUNCATED";
    case ErrCode::unknown_speaker: return "UNKNOWN_SPEAKER";
    case ErrCode::bad_request: return "BAD_REQUEST";
    case ErrCode::store_error: return "STORE_ERROR";
    case ErrCode::diverged: return "DIVERGED";
    case ErrCode::io_error: return "IO_ERROR";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}

  ErrCode code() const { return code_; }

 private:
  ErrCode code_;
};

[[noreturn]] inline void fail(ErrCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace subm
