#include "otre/error.hpp"

namespace otre {

const char *error_code_name(ErrorCode code) noexcept {
  switch (code) {
  case ErrorCode::Ok: return "Ok";
  case ErrorCode::MissingFile: return "MissingFile";
  case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
  case ErrorCode::CorruptData: return "CorruptData";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::TooSmall: return "TooSmall";
  case ErrorCode::BadMagic: return "BadMagic";
  case ErrorCode::VersionUnsupported: return "VersionUnsupported";
  case ErrorCode::NonFiniteParam: return "NonFiniteParam";
  case ErrorCode::LipschitzViolation: return "LipschitzViolation";
  case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
  case ErrorCode::EmptyGrid: return "EmptyGrid";
  case ErrorCode::MissingDir: return "MissingDir";
  case ErrorCode::MalformedLabels: return "MalformedLabels";
  case ErrorCode::UnknownMetric: return "UnknownMetric";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::IoError: return "IoError";
  case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

} // namespace otre
