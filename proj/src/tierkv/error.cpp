#include "tierkv/error.hpp"

namespace tierkv {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyConfigSet: return "EmptyConfigSet";
    case ErrorCode::kInvalidCurve: return "InvalidCurve";
    case ErrorCode::kNonPositiveInput: return "NonPositiveInput";
    case ErrorCode::kEmptyTrace: return "EmptyTrace";
    case ErrorCode::kCapacityExceeded: return "CapacityExceeded";
    case ErrorCode::kDirtyOverflow: return "DirtyOverflow";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kStorageWriteFailed: return "StorageWriteFailed";
    case ErrorCode::kStorageReadFailed: return "StorageReadFailed";
    case ErrorCode::kBackpressure: return "Backpressure";
    case ErrorCode::kCorruptBlob: return "CorruptBlob";
    case ErrorCode::kDictVersionMismatch: return "DictVersionMismatch";
    case ErrorCode::kCorpusFileUnreadable: return "CorpusFileUnreadable";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kBadHeader: return "BadHeader";
    case ErrorCode::kStoreUnreachable: return "StoreUnreachable";
    case ErrorCode::kNeverMeetsSlo: return "NeverMeetsSlo";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kBindFailure: return "BindFailure";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

ErrorCode error_code_from_string(std::string_view name) noexcept {
  for (int c = 0; c <= static_cast<int>(ErrorCode::kBindFailure); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::kInternal;
}

}  // namespace tierkv
