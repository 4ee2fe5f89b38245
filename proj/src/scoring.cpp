#include "guardgate/scoring.hpp"

#include "guardgate/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace guardgate {

FirstTokenLogits::FirstTokenLogits(double z_safe, double z_unsafe) : z_safe_(z_safe), z_unsafe_(z_unsafe) {
  if (!std::isfinite(z_safe) || !std::isfinite(z_unsafe)) {
    throw GuardError(ErrorCode::NonFiniteLogit, "first-token logits must be finite");
  }
}

UnsafeScore::UnsafeScore(double p_unsafe) : p_(p_unsafe) {
  if (!(p_unsafe > 0.0 && p_unsafe < 1.0)) {
    throw std::invalid_argument("unsafe probability must lie in (0, 1)");
  }
}

std::string_view to_string(Label label) { return label == Label::safe ? "safe" : "unsafe"; }

UnsafeScore unsafe_probability(const FirstTokenLogits &logits) {
  const double m = std::max(logits.z_safe(), logits.z_unsafe());
  const double e_safe = std::exp(logits.z_safe() - m);
  const double e_unsafe = std::exp(logits.z_unsafe() - m);
  double p = e_unsafe / (e_safe + e_unsafe);
  // Softmax of finite logits is strictly inside (0, 1); keep it so in doubles.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  p = std::clamp(p, lo, hi);
  return UnsafeScore(p);
}

std::string normalize_token(std::string_view token) {
  const auto not_space = [](char c) { return !std::isspace(static_cast<unsigned char>(c)); };
  const auto first = std::find_if(token.begin(), token.end(), not_space);
  const auto last = std::find_if(token.rbegin(), token.rend(), not_space).base();
  std::string out;
  if (first < last) {
    out.assign(first, last);
  }
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

namespace {

std::optional<double> merged_logprob(const std::map<std::string, double> &logprobs,
                                     const std::vector<std::string> &spellings) {
  std::vector<std::string> wanted;
  for (const auto &s : spellings) {
    wanted.push_back(normalize_token(s));
  }
  std::vector<double> hits;
  for (const auto &[token, value] : logprobs) {
    if (std::find(wanted.begin(), wanted.end(), normalize_token(token)) != wanted.end()) {
      hits.push_back(value);
    }
  }
  if (hits.empty()) {
    return std::nullopt;
  }
  if (hits.size() == 1) {
    return hits.front();
  }
  const double m = *std::max_element(hits.begin(), hits.end());
  double sum = 0.0;
  for (double h : hits) {
    sum += std::exp(h - m);
  }
  return m + std::log(sum);
}

}  // namespace

FirstTokenLogits logits_from_logprobs(const std::map<std::string, double> &candidate_logprobs,
                                      const CandidateSpellings &spellings) {
  const auto z_safe = merged_logprob(candidate_logprobs, spellings.safe);
  if (!z_safe) {
    throw GuardError(ErrorCode::MissingCandidateToken, "safe");
  }
  const auto z_unsafe = merged_logprob(candidate_logprobs, spellings.unsafe);
  if (!z_unsafe) {
    throw GuardError(ErrorCode::MissingCandidateToken, "unsafe");
  }
  return FirstTokenLogits(*z_safe, *z_unsafe);
}

std::vector<std::string> parse_category_continuation(std::string_view continuation) {
  std::vector<std::string> ids;
  while (!continuation.empty()) {
    const auto nl = continuation.find('\n');
    std::string id = normalize_token(continuation.substr(0, nl));
    // Tolerate list decorations such as "- violent" or "violent,".
    while (!id.empty() && (id.front() == '-' || id.front() == '*' || id.front() == ' ')) {
      id.erase(id.begin());
    }
    while (!id.empty() && (id.back() == ',' || id.back() == '.' || id.back() == ';')) {
      id.pop_back();
    }
    if (is_kebab_id(id) && std::find(ids.begin(), ids.end(), id) == ids.end()) {
      ids.push_back(std::move(id));
    }
    if (nl == std::string_view::npos) {
      break;
    }
    continuation.remove_prefix(nl + 1);
  }
  return ids;
}

SafetyVerdict assemble_verdict(UnsafeScore score, const PolicyConfig &policy,
                               const std::vector<std::string> &category_tokens,
                               std::vector<std::string> *dropped) {
  std::vector<std::string> triggered;
  for (const auto &id : category_tokens) {
    if (policy.enabled_categories.contains(id)) {
      if (std::find(triggered.begin(), triggered.end(), id) == triggered.end()) {
        triggered.push_back(id);
      }
    } else if (dropped) {
      dropped->push_back(id);
    }
  }

  SafetyVerdict verdict;
  verdict.score = score;
  verdict.policy_id = policy.policy_id;
  verdict.applied_threshold = triggered.empty() ? resolve_threshold(policy)
                                                : resolve_threshold(policy, triggered.front());
  verdict.label = decide(score, verdict.applied_threshold);
  if (verdict.label == Label::unsafe) {
    verdict.triggered_categories = std::move(triggered);
  }
  return verdict;
}

SafetyVerdict short_circuit_verdict(const PolicyConfig &policy) {
  SafetyVerdict verdict;
  verdict.label = Label::safe;
  verdict.policy_id = policy.policy_id;
  verdict.applied_threshold = resolve_threshold(policy);
  return verdict;
}

nlohmann::json to_json(const SafetyVerdict &verdict) {
  nlohmann::json j{{"label", std::string(to_string(verdict.label))},
                   {"applied_threshold", verdict.applied_threshold},
                   {"triggered_categories", verdict.triggered_categories},
                   {"policy_id", verdict.policy_id},
                   {"backend_latency_ms", verdict.backend_latency_ms},
                   {"evaluated", verdict.score.has_value()}};
  j["p_unsafe"] = verdict.score ? nlohmann::json(verdict.score->value()) : nlohmann::json(nullptr);
  if (!verdict.model_id.empty()) {
    j["model_id"] = verdict.model_id;
  }
  return j;
}

}  // namespace guardgate
