#pragma once

#include "guardgate/policy.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace guardgate {

/// Pre-softmax scores for the two first-token candidates. Both finite.
class FirstTokenLogits {
 public:
  /// Throws GuardError(NonFiniteLogit) on NaN or infinity.
  FirstTokenLogits(double z_safe, double z_unsafe);

  double z_safe() const noexcept { return z_safe_; }
  double z_unsafe() const noexcept { return z_unsafe_; }

  bool operator==(const FirstTokenLogits &) const = default;

 private:
  double z_safe_;
  double z_unsafe_;
};

/// p_unsafe in the open interval (0, 1).
class UnsafeScore {
 public:
  /// Throws std::invalid_argument outside (0, 1).
  explicit UnsafeScore(double p_unsafe);

  double value() const noexcept { return p_; }

  auto operator<=>(const UnsafeScore &) const = default;

 private:
  double p_;
};

enum class Label { safe, unsafe };

std::string_view to_string(Label label);

/// exp(z_unsafe) / (exp(z_safe) + exp(z_unsafe)), evaluated after
/// subtracting the larger logit.
UnsafeScore unsafe_probability(const FirstTokenLogits &logits);

/// unsafe iff p_unsafe >= tau.
inline Label decide(UnsafeScore score, double tau) {
  return score.value() >= tau ? Label::unsafe : Label::safe;
}

/// Token spellings that count as each candidate, compared after lowercasing
/// and trimming whitespace.
struct CandidateSpellings {
  std::vector<std::string> safe = {"safe"};
  std::vector<std::string> unsafe = {"unsafe"};
};

std::string normalize_token(std::string_view token);

/// Picks the safe/unsafe entries out of a first-position logprob map.
/// Spelling variants that normalize to the same candidate are merged by
/// log-sum-exp. Throws GuardError(MissingCandidateToken).
FirstTokenLogits logits_from_logprobs(const std::map<std::string, double> &candidate_logprobs,
                                      const CandidateSpellings &spellings = {});

/// Category ids from a guard continuation: one per line, lowercased and
/// trimmed; lines that are not kebab ids are ignored.
std::vector<std::string> parse_category_continuation(std::string_view continuation);

struct SafetyVerdict {
  Label label = Label::safe;
  // Empty when the policy short-circuits (no active categories, or the
  // input role is not covered) and no score was computed.
  std::optional<UnsafeScore> score;
  double applied_threshold = 0.5;
  std::vector<std::string> triggered_categories;
  std::string policy_id;
  double backend_latency_ms = 0.0;
  std::string model_id;

  bool operator==(const SafetyVerdict &) const = default;
};

/// Verdict for a score under a policy. Category ids outside the policy's
/// enabled set are dropped; the first remaining one selects the threshold.
/// `dropped`, when given, receives the ids that were discarded.
SafetyVerdict assemble_verdict(UnsafeScore score, const PolicyConfig &policy,
                               const std::vector<std::string> &category_tokens,
                               std::vector<std::string> *dropped = nullptr);

/// Safe verdict with no score, for policies with nothing to test.
SafetyVerdict short_circuit_verdict(const PolicyConfig &policy);

nlohmann::json to_json(const SafetyVerdict &verdict);

}  // namespace guardgate
