#include "wellcast/error.hpp"

namespace wellcast {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFrame: return "MissingFrame";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::WrongColorSpace: return "WrongColorSpace";
    case ErrorKind::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorKind::EmptyVideo: return "EmptyVideo";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::BadManifest: return "BadManifest";
    case ErrorKind::DuplicateWell: return "DuplicateWell";
    case ErrorKind::DegenerateHistogram: return "DegenerateHistogram";
    case ErrorKind::EmptyWell: return "EmptyWell";
    case ErrorKind::CropTooLarge: return "CropTooLarge";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnknownWell: return "UnknownWell";
    case ErrorKind::NumericOverflow: return "NumericOverflow";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace wellcast
