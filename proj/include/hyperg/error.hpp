#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hyperg {

enum class Errc {
  MalformedJson,
  MalformedCsv,
  RaggedRows,
  EmptyTable,
  AugmenterUnavailable,
  Timeout,
  HttpStatus,
  EmptyCompletion,
  IndexOutOfRange,
  NotAPermutation,
  ShapeMismatch,
  EmptySegment,
  NonFiniteValue,
  LogNotEnabled,
  MissingMarker,
  DuplicateMarker,
  LengthMismatch,
  EmptyCorpus,
  InvalidSpec,
  InvalidConfig,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hyperg
