#pragma once

#include "guardgate/backend.hpp"
#include "guardgate/pipeline.hpp"
#include "guardgate/policy.hpp"
#include "guardgate/scoring.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace guardgate::eval {

struct EvalRecord {
  std::string id;
  GuardRole role = GuardRole::prompt;
  std::string text;
  std::vector<ConversationTurn> context;
  Label gold_label = Label::safe;
  std::optional<std::string> language;
  std::string source;

  bool operator==(const EvalRecord &) const = default;
};

nlohmann::json to_json(const EvalRecord &record);
/// Throws std::invalid_argument describing the first problem.
EvalRecord eval_record_from_json(const nlohmann::json &j, const std::string &default_source);

struct MalformedLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct DatasetLoad {
  std::vector<EvalRecord> records;
  std::vector<MalformedLine> malformed;
  std::vector<std::string> warnings;
};

inline constexpr double kMaxMalformedFraction = 0.01;

/// JSONL loader. Records keep file order; `source` defaults to the file stem.
/// Throws GuardError(FileMissing) or GuardError(TooManyMalformed) when more
/// than 1% of non-empty lines are malformed.
DatasetLoad load_dataset(const std::filesystem::path &path);

void write_dataset(const std::filesystem::path &path, const std::vector<EvalRecord> &records);

// --- metrics -------------------------------------------------------------------

/// Unsafe is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  void add(Label gold, Label predicted);
  ConfusionCounts &operator+=(const ConfusionCounts &other);
  bool operator==(const ConfusionCounts &) const = default;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const Prf &) const = default;
};

/// Zero denominators yield 0 for the affected metric.
Prf f1(const ConfusionCounts &counts);

// --- scoring and caching ---------------------------------------------------------

struct CachedScore {
  std::optional<double> p_unsafe;  // empty: short-circuited, never scored
  std::vector<std::string> categories;
  std::string model_id;

  bool operator==(const CachedScore &) const = default;
};

/// Label a cached score under `policy` exactly as the gateway would.
SafetyVerdict rethreshold(const CachedScore &score, const PolicyConfig &policy);

/// Hash of the policy fields that influence a backend query (categories,
/// target, redaction); thresholds are excluded.
std::string scoring_policy_hash(const PolicyConfig &policy);

/// Thread-safe score cache keyed by (record key, scoring policy hash, model id).
class ScoreCache {
 public:
  std::optional<CachedScore> find(const std::string &key) const;
  void insert(const std::string &key, CachedScore score);
  std::size_t size() const;

  void load(const std::filesystem::path &path);
  void save(const std::filesystem::path &path) const;

  static std::string key(const EvalRecord &record, const std::string &policy_hash, const std::string &model_id);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, CachedScore> entries_;
};

struct RecordResult {
  std::string id;
  std::string source;
  GuardRole role = GuardRole::prompt;
  Label gold = Label::safe;
  std::optional<Label> predicted;  // empty when excluded
  std::optional<double> p_unsafe;
  double tau = 0.0;
  std::vector<std::string> categories;
  bool excluded = false;
  std::string error;

  bool operator==(const RecordResult &) const = default;
};

nlohmann::json to_json(const RecordResult &result);
RecordResult record_result_from_json(const nlohmann::json &j);
void write_record_results(const std::filesystem::path &path, const std::vector<RecordResult> &results);
std::vector<RecordResult> read_record_results(const std::filesystem::path &path);

/// Counts over non-excluded results.
ConfusionCounts count(const std::vector<RecordResult> &results);

struct EvalOptions {
  std::size_t max_in_flight = 8;
  bool redact = false;
};

struct SweepRow {
  double tau = 0.0;
  ConfusionCounts counts;
  Prf prf;
};

/// Runs records through a GuardPipeline, caching scores so that
/// re-thresholding never re-queries the backend.
class Evaluator {
 public:
  explicit Evaluator(const GuardPipeline &pipeline, EvalOptions options = {});

  /// Scores every record (once per cache key) and labels it under `policy`.
  /// Results are sorted by (source, id). Timeouts become exclusions; other
  /// errors propagate.
  std::vector<RecordResult> run(const std::vector<EvalRecord> &records, const PolicyConfig &policy);

  ConfusionCounts evaluate(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                           std::vector<RecordResult> *results = nullptr);

  /// One inference pass, then confusion counts per tau. The grid must be
  /// strictly increasing inside [0, 1]; tau replaces the policy-level
  /// threshold while per-category overrides still apply.
  std::vector<SweepRow> threshold_sweep(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                                        const std::vector<double> &grid);

  ScoreCache &cache() noexcept { return cache_; }
  const ScoreCache &cache() const noexcept { return cache_; }

 private:
  const GuardPipeline &pipeline_;
  EvalOptions options_;
  ScoreCache cache_;
};

/// Free-function form with a fresh cache.
ConfusionCounts evaluate(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                         const GuardPipeline &pipeline, std::vector<RecordResult> *results = nullptr);

/// Parses "0,0.25,0.5" or "start:stop:step".
std::vector<double> parse_tau_grid(const std::string &spec);
void check_tau_grid(const std::vector<double> &grid);

// --- reports ---------------------------------------------------------------------

struct DatasetMetrics {
  std::string dataset;
  ConfusionCounts counts;
  Prf prf;
  std::size_t total = 0;
  std::size_t excluded = 0;

  bool operator==(const DatasetMetrics &) const = default;
};

struct RuntimeStats {
  std::size_t records = 0;
  std::size_t backend_queries = 0;
  double wall_ms = 0.0;

  bool operator==(const RuntimeStats &) const = default;
};

struct MetricsReport {
  std::string label;
  std::string model_id;
  std::string policy_id;
  double tau = 0.5;
  std::vector<DatasetMetrics> datasets;
  Prf macro;  // arithmetic mean over datasets
  std::vector<SweepRow> sweep;
  RuntimeStats runtime;
};

bool operator==(const SweepRow &a, const SweepRow &b);
bool operator==(const MetricsReport &a, const MetricsReport &b);

/// Per-dataset metrics in first-seen source order plus the macro average.
MetricsReport build_report(const std::string &label, const std::string &model_id, const PolicyConfig &policy,
                           const std::vector<RecordResult> &results);

inline constexpr std::string_view kMetricConventions =
    "positive class = unsafe; precision = 0 when tp+fp = 0; recall = 0 when tp+fn = 0; "
    "F1 = 0 when precision+recall = 0; excluded records (backend timeouts) are not imputed";

nlohmann::json to_json(const MetricsReport &report);
MetricsReport report_from_json(const nlohmann::json &j);

/// Table with one row per report, one column per dataset and an "Avg."
/// column; cells are F1 x 100 with one decimal.
std::string render_markdown(const std::vector<MetricsReport> &reports);
std::string render_json(const std::vector<MetricsReport> &reports);

// --- synthetic suite -------------------------------------------------------------

struct SyntheticOptions {
  std::size_t records = 1000;
  double unsafe_fraction = 0.5;
  double inverted_fraction = 0.0;  // probability each lexicon entry has its sign flipped
  double phrase_weight = 4.0;
  std::uint64_t seed = 2024;
  std::vector<std::string> datasets = {"synthetic"};
};

struct SyntheticSuite {
  std::vector<EvalRecord> records;
  Lexicon lexicon;
  std::vector<std::string> inverted_ids;
};

/// Records with one unique trigger phrase each and a lexicon whose weights
/// agree with the gold labels (except the inverted entries).
SyntheticSuite make_synthetic_suite(const SyntheticOptions &options, const CategoryTaxonomy &taxonomy);

}  // namespace guardgate::eval
