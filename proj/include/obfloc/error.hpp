#pragma once

#include <stdexcept>
#include <string>

namespace obfloc {

enum class ErrorCode {
  InvalidArgument,
  InvalidKernel,
  InvalidFactor,
  DimensionMismatch,
  MissingPaletteEntry,
  ParseError,
  DecodeError,
  MissingFile,
  IdMismatch,
  DegenerateConfiguration,
};

const char* to_string(ErrorCode code);

// Single exception type for data and argument errors. In-band outcomes
// (Behind, Degenerate, Failure, empty solution sets) are values, not throws.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace obfloc
