#include "hyperg/error.hpp"

namespace hyperg {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedJson: return "MalformedJson";
    case Errc::MalformedCsv: return "MalformedCsv";
    case Errc::RaggedRows: return "RaggedRows";
    case Errc::EmptyTable: return "EmptyTable";
    case Errc::AugmenterUnavailable: return "AugmenterUnavailable";
    case Errc::Timeout: return "Timeout";
    case Errc::HttpStatus: return "HttpStatus";
    case Errc::EmptyCompletion: return "EmptyCompletion";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NotAPermutation: return "NotAPermutation";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptySegment: return "EmptySegment";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::LogNotEnabled: return "LogNotEnabled";
    case Errc::MissingMarker: return "MissingMarker";
    case Errc::DuplicateMarker: return "DuplicateMarker";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hyperg
