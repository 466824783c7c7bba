#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tierkv {

// Values are mirrored one-to-one by tkv_status in tierkv.h.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kEmptyConfigSet = 2,
  kInvalidCurve = 3,
  kNonPositiveInput = 4,
  kEmptyTrace = 5,
  kCapacityExceeded = 6,
  kDirtyOverflow = 7,
  kIoFailure = 8,
  kChecksumMismatch = 9,
  kStorageWriteFailed = 10,
  kStorageReadFailed = 11,
  kBackpressure = 12,
  kCorruptBlob = 13,
  kDictVersionMismatch = 14,
  kCorpusFileUnreadable = 15,
  kMalformedLine = 16,
  kBadHeader = 17,
  kStoreUnreachable = 18,
  kNeverMeetsSlo = 19,
  kConfigError = 20,
  kBindFailure = 21,
  kInternal = 99,
};

std::string_view to_string(ErrorCode code) noexcept;
// Inverse of to_string; kInternal for unknown names.
ErrorCode error_code_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace tierkv
