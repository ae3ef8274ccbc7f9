#include "lulc/error.hpp"

namespace lulc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::UnmappedColor: return "UnmappedColor";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::InsufficientImages: return "InsufficientImages";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::WrongKind: return "WrongKind";
    case ErrorKind::IndexOutOfGrid: return "IndexOutOfGrid";
    case ErrorKind::MissingTile: return "MissingTile";
    case ErrorKind::WrongTileDims: return "WrongTileDims";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::AllPixelsIgnored: return "AllPixelsIgnored";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::SchemaVersionUnknown: return "SchemaVersionUnknown";
    case ErrorKind::EmptyComparison: return "EmptyComparison";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
      return 2;
    case ErrorKind::DivergedLoss:
      return 4;
    case ErrorKind::MissingFile:
    case ErrorKind::IoFailure:
    case ErrorKind::HashMismatch:
    case ErrorKind::SchemaVersionUnknown:
      return 5;
    default:
      return 3;
  }
}

}  // namespace lulc
