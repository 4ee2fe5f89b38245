#include "guardgate/errors.hpp"

namespace guardgate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::InvalidTaxonomy: return "InvalidTaxonomy";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteLogit: return "NonFiniteLogit";
    case ErrorCode::MissingCandidateToken: return "MissingCandidateToken";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::MalformedUpstream: return "MalformedUpstream";
    case ErrorCode::MissingLogprobs: return "MissingLogprobs";
    case ErrorCode::AuthRejected: return "AuthRejected";
    case ErrorCode::InvalidCustomPattern: return "InvalidCustomPattern";
    case ErrorCode::NotDigits: return "NotDigits";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::OverlappingSpans: return "OverlappingSpans";
    case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorCode::NotReversible: return "NotReversible";
    case ErrorCode::CorruptMapping: return "CorruptMapping";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::UnknownPolicy: return "UnknownPolicy";
    case ErrorCode::PolicyExists: return "PolicyExists";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FileMissing: return "FileMissing";
    case ErrorCode::TooManyMalformed: return "TooManyMalformed";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {
std::string summarize(const std::vector<Violation> &violations) {
  std::string out = "validation failed";
  for (const auto &v : violations) {
    out += "; ";
    out += to_string(v.code);
    if (!v.field.empty()) {
      out += " at " + v.field;
    }
    if (!v.detail.empty()) {
      out += ": " + v.detail;
    }
  }
  return out;
}

ErrorCode primary_code(const std::vector<Violation> &violations) {
  return violations.empty() ? ErrorCode::InvalidPolicy : violations.front().code;
}
}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : GuardError(primary_code(violations), summarize(violations)),
      violations_(std::move(violations)) {}

}  // namespace guardgate
