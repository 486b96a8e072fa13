#include "riverpilot/error.hpp"

namespace riverpilot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateHomography: return "DegenerateHomography";
    case ErrorCode::PlacementExhausted: return "PlacementExhausted";
    case ErrorCode::TooFewDots: return "TooFewDots";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::SheetBehindCamera: return "SheetBehindCamera";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NotSailing: return "NotSailing";
    case ErrorCode::NotDocked: return "NotDocked";
    case ErrorCode::NotCrashed: return "NotCrashed";
    case ErrorCode::HeadingUnset: return "HeadingUnset";
    case ErrorCode::SessionFinished: return "SessionFinished";
    case ErrorCode::Unsolvable: return "Unsolvable";
    case ErrorCode::UnknownVector: return "UnknownVector";
    case ErrorCode::ItemCountMismatch: return "ItemCountMismatch";
    case ErrorCode::InsufficientCohort: return "InsufficientCohort";
    case ErrorCode::InsufficientLevels: return "InsufficientLevels";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFew: return "TooFew";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BindError: return "BindError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IllegalInState: return "IllegalInState";
    case ErrorCode::GapInLog: return "GapInLog";
    case ErrorCode::SnapshotMismatch: return "SnapshotMismatch";
  }
  return "Unknown";
}

namespace {
std::string compose(ErrorCode code, const std::string& detail) {
  std::string msg(to_string(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}
}  // namespace

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(std::move(detail)) {}

}  // namespace riverpilot
