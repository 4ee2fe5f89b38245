#pragma once

#include "guardgate/backend.hpp"
#include "guardgate/policy.hpp"
#include "guardgate/redaction.hpp"
#include "guardgate/scoring.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace guardgate {

struct StageTimings {
  double redaction_ms = 0.0;
  double render_ms = 0.0;
  double backend_ms = 0.0;
  double scoring_ms = 0.0;
  double total_ms = 0.0;
};

nlohmann::json to_json(const StageTimings &timings);

struct PipelineOptions {
  std::chrono::nanoseconds backend_deadline = std::chrono::seconds(5);
  int max_continuation_tokens = 16;
};

struct CheckOutcome {
  SafetyVerdict verdict;
  // Enabled-category ids reported by the backend, before the verdict
  // suppresses them for safe labels. Used to re-threshold cached scores.
  std::vector<std::string> candidate_categories;
  std::vector<std::string> dropped_categories;
  std::optional<RedactionResult> redaction;  // includes the reversible mapping
  StageTimings timings;
};

/// redaction -> guard prompt -> backend -> scoring -> verdict, with no
/// state carried between calls. Shared by the HTTP gateway and the
/// evaluation harness.
class GuardPipeline {
 public:
  GuardPipeline(CategoryTaxonomy taxonomy, std::shared_ptr<const DetectorBackend> backend,
                PipelineOptions options = {});

  /// `policy` must already be validated against taxonomy().
  /// With `redact` set, the guard model sees the masked text; the policy's
  /// masking settings apply, or the defaults when it has none.
  CheckOutcome run(const GuardInput &input, const PolicyConfig &policy, bool redact) const;

  const CategoryTaxonomy &taxonomy() const noexcept { return taxonomy_; }
  const DetectorBackend &backend() const noexcept { return *backend_; }
  const PipelineOptions &options() const noexcept { return options_; }

 private:
  CategoryTaxonomy taxonomy_;
  std::shared_ptr<const DetectorBackend> backend_;
  PipelineOptions options_;
};

bool is_valid_utf8(std::string_view text);

}  // namespace guardgate
