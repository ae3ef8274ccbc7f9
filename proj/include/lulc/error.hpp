#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lulc {

enum class ErrorKind {
  // raster
  MissingFile,
  UnsupportedFormat,
  CorruptImage,
  IoFailure,
  // labels
  UnmappedColor,
  EmptySelection,
  InsufficientImages,
  // augment / grid / eval
  DimMismatch,
  WrongKind,
  IndexOutOfGrid,
  MissingTile,
  WrongTileDims,
  // net
  ShapeMismatch,
  StaleCache,
  AllPixelsIgnored,
  // training
  EmptySplit,
  DivergedLoss,
  HashMismatch,
  SchemaVersionUnknown,
  // eval
  EmptyComparison,
  MissingClass,
  // cli
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Exit status the CLI reports for an error of this kind:
/// 2 config, 3 data, 4 training divergence, 5 I/O.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lulc
