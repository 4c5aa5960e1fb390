#include "ibowimg/error.hpp"

namespace ibowimg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kArity: return "arity";
    case ErrorKind::kJoin: return "join";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kLength: return "length";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kArgument: return "argument";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + " error: " + what);
}

}  // namespace ibowimg
