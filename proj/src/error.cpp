#include "lrselect/error.hpp"

namespace lrselect {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MissingDomainLabels: return "MissingDomainLabels";
  }
  return "Unknown";
}

}  // namespace lrselect
