#pragma once

#include <stdexcept>
#include <string>

namespace otre {

/// Failure categories shared by every module. The numeric values are mirrored
/// one-to-one by `otre_status` in the C API, so never reorder them.
enum class ErrorCode : int {
  Ok = 0,
  MissingFile = 1,
  UnsupportedFormat = 2,
  CorruptData = 3,
  ShapeMismatch = 4,
  TooSmall = 5,
  BadMagic = 6,
  VersionUnsupported = 7,
  NonFiniteParam = 8,
  LipschitzViolation = 9,
  NonFiniteIterate = 10,
  EmptyGrid = 11,
  MissingDir = 12,
  MalformedLabels = 13,
  UnknownMetric = 14,
  InvalidArgument = 15,
  IoError = 16,
  Internal = 17,
};

const char *error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &what) { throw Error(code, what); }

} // namespace otre
