#include "guardgate/pipeline.hpp"

#include "guardgate/errors.hpp"
#include "guardgate/guard_prompt.hpp"

namespace guardgate {

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(clock_type::time_point start) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - start).count();
}

}  // namespace

nlohmann::json to_json(const StageTimings &t) {
  return {{"redaction_ms", t.redaction_ms},
          {"render_ms", t.render_ms},
          {"backend_ms", t.backend_ms},
          {"scoring_ms", t.scoring_ms},
          {"total_ms", t.total_ms}};
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) {
      return false;
    }
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) {
        return false;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return false;
    }
    i += len;
  }
  return true;
}

GuardPipeline::GuardPipeline(CategoryTaxonomy taxonomy, std::shared_ptr<const DetectorBackend> backend,
                             PipelineOptions options)
    : taxonomy_(std::move(taxonomy)), backend_(std::move(backend)), options_(options) {
  if (!backend_) {
    throw std::invalid_argument("GuardPipeline needs a backend");
  }
}

CheckOutcome GuardPipeline::run(const GuardInput &input, const PolicyConfig &policy, bool redact) const {
  const auto started = clock_type::now();
  if (is_blank(input.text)) {
    throw GuardError(ErrorCode::EmptyInput, "input text is empty");
  }

  CheckOutcome outcome;
  GuardInput guarded = input;
  if (redact) {
    const auto t0 = clock_type::now();
    const MaskingPolicy masking = policy.redaction.value_or(MaskingPolicy{});
    const auto spans = detect_entities(input.text, masking);
    outcome.redaction = mask(input.text, spans, masking);
    guarded.text = outcome.redaction->masked_text;
    outcome.timings.redaction_ms = ms_since(t0);
  }

  if (effective_categories(policy, taxonomy_).empty() || !policy.covers(input.role)) {
    outcome.verdict = short_circuit_verdict(policy);
    outcome.timings.total_ms = ms_since(started);
    return outcome;
  }

  auto t0 = clock_type::now();
  BackendRequest request;
  request.guard_prompt = render_guard_prompt(guarded, policy, taxonomy_);
  request.max_continuation_tokens = options_.max_continuation_tokens;
  request.deadline = options_.backend_deadline;
  outcome.timings.render_ms = ms_since(t0);

  t0 = clock_type::now();
  const BackendResponse response = backend_->query(request);
  outcome.timings.backend_ms = ms_since(t0);

  t0 = clock_type::now();
  const auto logits = logits_from_logprobs(response.candidate_logprobs, backend_->spellings());
  const auto score = unsafe_probability(logits);
  for (auto &id : parse_category_continuation(response.continuation)) {
    if (policy.enabled_categories.contains(id)) {
      outcome.candidate_categories.push_back(id);
    }
  }
  outcome.verdict = assemble_verdict(score, policy, parse_category_continuation(response.continuation),
                                     &outcome.dropped_categories);
  outcome.verdict.backend_latency_ms = outcome.timings.backend_ms;
  outcome.verdict.model_id = response.model_id.empty() ? backend_->model_id() : response.model_id;
  outcome.timings.scoring_ms = ms_since(t0);
  outcome.timings.total_ms = ms_since(started);
  return outcome;
}

}  // namespace guardgate
