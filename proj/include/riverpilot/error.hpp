#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace riverpilot {

enum class ErrorCode {
  // geometry
  PointAtInfinity,
  DegenerateHomography,
  // markers
  PlacementExhausted,
  TooFewDots,
  InsufficientCorrespondences,
  NoConsensus,
  SheetBehindCamera,
  // game
  ParseError,
  InvariantViolation,
  NotSailing,
  NotDocked,
  NotCrashed,
  HeadingUnset,
  SessionFinished,
  Unsolvable,
  // canvas
  UnknownVector,
  // assessment / analytics
  ItemCountMismatch,
  InsufficientCohort,
  InsufficientLevels,
  TooFewSamples,
  LengthMismatch,
  TooFew,
  DegenerateVariance,
  AllZeroDifferences,
  RankDeficient,
  // service
  BindError,
  ConfigError,
  SchemaError,
  IllegalInState,
  GapInLog,
  SnapshotMismatch,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `detail()` carries the field path,
/// phase name, or sequence number depending on the code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace riverpilot
