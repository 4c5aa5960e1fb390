#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ibowimg {

/// Broad failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
  kParse,       // malformed input syntax
  kSchema,      // well-formed input missing or mistyping a field
  kArity,       // wrong number of answers
  kJoin,        // annotation without a matching question
  kFormat,      // bad magic / version in a binary file
  kLength,      // truncated binary file
  kIntegrity,   // duplicate ids and similar
  kNotFound,    // unknown image id, missing file
  kDimension,   // shape mismatch
  kLabel,       // class index out of range
  kCheckpoint,  // unusable checkpoint
  kArgument,    // caller passed an invalid argument
  kDivergence,  // non-finite training loss
  kIo,          // filesystem failure
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace ibowimg
