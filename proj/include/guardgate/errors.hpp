#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace guardgate {

enum class ErrorCode {
  // policy / taxonomy
  UnknownCategory,
  ThresholdOutOfRange,
  InvalidPolicy,
  InvalidTaxonomy,
  EmptyInput,
  // scoring
  NonFiniteLogit,
  MissingCandidateToken,
  // backends
  Timeout,
  Unreachable,
  MalformedUpstream,
  MissingLogprobs,
  AuthRejected,
  // redaction
  InvalidCustomPattern,
  NotDigits,
  BadLength,
  OverlappingSpans,
  SpanOutOfBounds,
  NotReversible,
  CorruptMapping,
  // gateway
  InvalidRequest,
  UnknownPolicy,
  PolicyExists,
  InvalidConfig,
  // evaluation
  FileMissing,
  TooManyMalformed,
  IoError,
};

std::string_view to_string(ErrorCode code);

class GuardError : public std::runtime_error {
 public:
  GuardError(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// One problem found while validating a policy, taxonomy or request body.
struct Violation {
  ErrorCode code;
  std::string field;
  std::string detail;

  bool operator==(const Violation &) const = default;
};

/// Raised with every violation found, not just the first.
class ValidationError : public GuardError {
 public:
  explicit ValidationError(std::vector<Violation> violations);

  const std::vector<Violation> &violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

}  // namespace guardgate
