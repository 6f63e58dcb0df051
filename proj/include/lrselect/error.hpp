#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrselect {

enum class ErrorCode {
  MissingFile,
  ParseError,
  DimMismatch,
  DuplicateId,
  UnknownId,
  CorruptFile,
  IoError,
  TooFewFrames,
  DegenerateData,
  EmptyInput,
  TooLarge,
  InvalidSpec,
  MissingDomainLabels,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// that callers (notably the CLI) can dispatch on it without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lrselect
