#include "obfloc/error.hpp"

namespace obfloc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::InvalidFactor: return "InvalidFactor";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingPaletteEntry: return "MissingPaletteEntry";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
  }
  return "Unknown";
}

}  // namespace obfloc
