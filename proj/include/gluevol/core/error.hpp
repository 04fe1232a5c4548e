#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gluevol {

enum class ErrorCode {
  FewerThanThreePoints,
  DegenerateCloud,
  EmptyResult,
  InconsistentLattice,
  NegativeSideVertices,
  EmptyMesh,
  BadLayoutConfig,
  OutsideFootprint,
  DieLargerThanFootprint,
  NonPositiveRange,
  EmptyGlue,
  MissingColumnAnnotation,
  IncompleteScanSet,
  EmptyCloud,
  ShapeMismatch,
  LengthMismatch,
  EmptySplit,
  UnknownType,
  BadFormat,
  Io,
  Config,
  MissingInput,
  NumericFailure,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::FewerThanThreePoints: return "FewerThanThreePoints";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::InconsistentLattice: return "InconsistentLattice";
    case ErrorCode::NegativeSideVertices: return "NegativeSideVertices";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::BadLayoutConfig: return "BadLayoutConfig";
    case ErrorCode::OutsideFootprint: return "OutsideFootprint";
    case ErrorCode::DieLargerThanFootprint: return "DieLargerThanFootprint";
    case ErrorCode::NonPositiveRange: return "NonPositiveRange";
    case ErrorCode::EmptyGlue: return "EmptyGlue";
    case ErrorCode::MissingColumnAnnotation: return "MissingColumnAnnotation";
    case ErrorCode::IncompleteScanSet: return "IncompleteScanSet";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

/// Single exception type for the library; the code identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gluevol
