#include "guardgate/eval.hpp"

#include "guardgate/errors.hpp"
#include "guardgate/guard_prompt.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace guardgate::eval {

using json = nlohmann::json;

namespace {

std::optional<Label> label_from_string(std::string_view s) {
  if (s == "safe") return Label::safe;
  if (s == "unsafe") return Label::unsafe;
  return std::nullopt;
}

std::vector<ConversationTurn> turns_from_json(const json &j) {
  std::vector<ConversationTurn> turns;
  if (!j.is_array()) {
    throw std::invalid_argument("context must be an array");
  }
  for (const auto &t : j) {
    auto role = t.is_object() && t.contains("role") && t["role"].is_string()
                    ? guard_role_from_string(t["role"].get<std::string>())
                    : std::nullopt;
    if (!role || !t.contains("text") || !t["text"].is_string()) {
      throw std::invalid_argument("context turns need role (prompt|response) and text");
    }
    turns.push_back({*role, t["text"].get<std::string>()});
  }
  return turns;
}

std::string record_key(const std::string &source, const std::string &id) { return source + '\x1f' + id; }

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json prf_json(const Prf &p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

Prf prf_from_json(const json &j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

json counts_json(const ConfusionCounts &c) { return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}; }

ConfusionCounts counts_from_json(const json &j) {
  return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("fn").get<std::uint64_t>(),
          j.at("tn").get<std::uint64_t>()};
}

std::string percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value * 100.0);
  return buf;
}

std::string fixed(double value, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

}  // namespace

json to_json(const EvalRecord &r) {
  json j{{"id", r.id},
         {"role", std::string(to_string(r.role))},
         {"text", r.text},
         {"gold_label", std::string(to_string(r.gold_label))},
         {"source", r.source}};
  if (!r.context.empty()) {
    json turns = json::array();
    for (const auto &t : r.context) {
      turns.push_back({{"role", std::string(to_string(t.role))}, {"text", t.text}});
    }
    j["context"] = turns;
  }
  if (r.language) {
    j["language"] = *r.language;
  }
  return j;
}

EvalRecord eval_record_from_json(const json &j, const std::string &default_source) {
  if (!j.is_object()) {
    throw std::invalid_argument("line is not a JSON object");
  }
  EvalRecord r;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    throw std::invalid_argument("missing or empty string 'id'");
  }
  r.id = j["id"].get<std::string>();
  auto role = j.contains("role") && j["role"].is_string() ? guard_role_from_string(j["role"].get<std::string>())
                                                          : std::nullopt;
  if (!role) {
    throw std::invalid_argument("'role' must be prompt or response");
  }
  r.role = *role;
  if (!j.contains("text") || !j["text"].is_string() || is_blank(j["text"].get<std::string>())) {
    throw std::invalid_argument("missing or blank 'text'");
  }
  r.text = j["text"].get<std::string>();
  if (!j.contains("gold_label")) {
    throw std::invalid_argument("missing 'gold_label'");
  }
  auto gold = j["gold_label"].is_string() ? label_from_string(normalize_token(j["gold_label"].get<std::string>()))
                                          : std::nullopt;
  if (!gold) {
    throw std::invalid_argument("'gold_label' must be safe or unsafe");
  }
  r.gold_label = *gold;
  if (j.contains("context") && !j["context"].is_null()) {
    r.context = turns_from_json(j["context"]);
  }
  if (j.contains("language") && j["language"].is_string()) {
    r.language = j["language"].get<std::string>();
  }
  r.source = j.contains("source") && j["source"].is_string() ? j["source"].get<std::string>() : default_source;
  return r;
}

DatasetLoad load_dataset(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw GuardError(ErrorCode::FileMissing, "dataset not found: " + path.string());
  }
  DatasetLoad load;
  const std::string default_source = path.stem().string();
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  std::size_t non_empty = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (is_blank(line)) {
      continue;
    }
    ++non_empty;
    try {
      EvalRecord record = eval_record_from_json(json::parse(line), default_source);
      if (!seen.insert(record_key(record.source, record.id)).second) {
        load.warnings.push_back("line " + std::to_string(line_no) + ": duplicate id '" + record.id + "'");
      }
      load.records.push_back(std::move(record));
    } catch (const json::parse_error &e) {
      load.malformed.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const std::invalid_argument &e) {
      load.malformed.push_back({line_no, e.what()});
    }
  }
  if (non_empty == 0) {
    load.warnings.push_back(path.string() + ": dataset is empty");
  }
  if (static_cast<double>(load.malformed.size()) > kMaxMalformedFraction * static_cast<double>(non_empty)) {
    throw GuardError(ErrorCode::TooManyMalformed,
                     std::to_string(load.malformed.size()) + " of " + std::to_string(non_empty) + " lines in " +
                         path.string() + " are malformed (first: line " +
                         std::to_string(load.malformed.front().line) + ": " + load.malformed.front().reason + ")");
  }
  return load;
}

void write_dataset(const std::filesystem::path &path, const std::vector<EvalRecord> &records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto &r : records) {
    out << to_json(r).dump() << '\n';
  }
  if (!out) {
    throw GuardError(ErrorCode::IoError, "cannot write " + path.string());
  }
}

void ConfusionCounts::add(Label gold, Label predicted) {
  if (gold == Label::unsafe) {
    ++(predicted == Label::unsafe ? tp : fn);
  } else {
    ++(predicted == Label::unsafe ? fp : tn);
  }
}

ConfusionCounts &ConfusionCounts::operator+=(const ConfusionCounts &o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

Prf f1(const ConfusionCounts &c) {
  Prf p;
  p.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  p.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  p.f1 = p.precision + p.recall == 0.0 ? 0.0 : 2.0 * p.precision * p.recall / (p.precision + p.recall);
  return p;
}

SafetyVerdict rethreshold(const CachedScore &score, const PolicyConfig &policy) {
  if (!score.p_unsafe) {
    return short_circuit_verdict(policy);
  }
  return assemble_verdict(UnsafeScore(*score.p_unsafe), policy, score.categories);
}

std::string scoring_policy_hash(const PolicyConfig &policy) {
  json j{{"enabled_categories", policy.enabled_categories}, {"target", std::string(to_string(policy.target))}};
  if (policy.redaction) {
    j["redaction"] = to_json(*policy.redaction);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::optional<CachedScore> ScoreCache::find(const std::string &key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return std::nullopt;
  }
  return it->second;
}

void ScoreCache::insert(const std::string &key, CachedScore score) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(key, std::move(score));
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string ScoreCache::key(const EvalRecord &record, const std::string &policy_hash, const std::string &model_id) {
  return record_key(record.source, record.id) + '\x1f' + policy_hash + '\x1f' + model_id;
}

void ScoreCache::load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return;
  }
  std::string line;
  std::lock_guard lock(mutex_);
  while (std::getline(in, line)) {
    if (is_blank(line)) {
      continue;
    }
    const json j = json::parse(line);
    CachedScore score;
    if (!j.at("p_unsafe").is_null()) {
      score.p_unsafe = j["p_unsafe"].get<double>();
    }
    score.categories = j.value("categories", std::vector<std::string>{});
    score.model_id = j.value("model_id", std::string());
    entries_.insert_or_assign(j.at("key").get<std::string>(), std::move(score));
  }
}

void ScoreCache::save(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  std::lock_guard lock(mutex_);
  for (const auto &[key, score] : entries_) {
    out << json{{"key", key},
                {"p_unsafe", score.p_unsafe ? json(*score.p_unsafe) : json(nullptr)},
                {"categories", score.categories},
                {"model_id", score.model_id}}
               .dump()
        << '\n';
  }
  if (!out) {
    throw GuardError(ErrorCode::IoError, "cannot write cache " + path.string());
  }
}

json to_json(const RecordResult &r) {
  return {{"id", r.id},
          {"source", r.source},
          {"role", std::string(to_string(r.role))},
          {"gold_label", std::string(to_string(r.gold))},
          {"predicted", r.predicted ? json(std::string(to_string(*r.predicted))) : json(nullptr)},
          {"p_unsafe", r.p_unsafe ? json(*r.p_unsafe) : json(nullptr)},
          {"tau", r.tau},
          {"categories", r.categories},
          {"excluded", r.excluded},
          {"error", r.error}};
}

RecordResult record_result_from_json(const json &j) {
  RecordResult r;
  r.id = j.at("id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  r.role = guard_role_from_string(j.at("role").get<std::string>()).value_or(GuardRole::prompt);
  r.gold = label_from_string(j.at("gold_label").get<std::string>()).value_or(Label::safe);
  if (!j.at("predicted").is_null()) {
    r.predicted = label_from_string(j["predicted"].get<std::string>());
  }
  if (!j.at("p_unsafe").is_null()) {
    r.p_unsafe = j["p_unsafe"].get<double>();
  }
  r.tau = j.at("tau").get<double>();
  r.categories = j.value("categories", std::vector<std::string>{});
  r.excluded = j.value("excluded", false);
  r.error = j.value("error", std::string());
  return r;
}

void write_record_results(const std::filesystem::path &path, const std::vector<RecordResult> &results) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto &r : results) {
    out << to_json(r).dump() << '\n';
  }
  if (!out) {
    throw GuardError(ErrorCode::IoError, "cannot write " + path.string());
  }
}

std::vector<RecordResult> read_record_results(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw GuardError(ErrorCode::FileMissing, "cannot open " + path.string());
  }
  std::vector<RecordResult> results;
  std::string line;
  while (std::getline(in, line)) {
    if (!is_blank(line)) {
      results.push_back(record_result_from_json(json::parse(line)));
    }
  }
  return results;
}

ConfusionCounts count(const std::vector<RecordResult> &results) {
  ConfusionCounts counts;
  for (const auto &r : results) {
    if (!r.excluded && r.predicted) {
      counts.add(r.gold, *r.predicted);
    }
  }
  return counts;
}

Evaluator::Evaluator(const GuardPipeline &pipeline, EvalOptions options) : pipeline_(pipeline), options_(options) {
  options_.max_in_flight = std::max<std::size_t>(1, options_.max_in_flight);
}

namespace {

struct ScoredBatch {
  std::vector<std::optional<CachedScore>> scores;  // empty optional: excluded
  std::vector<std::string> errors;
};

ScoredBatch score_all(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                      const GuardPipeline &pipeline, ScoreCache &cache, const EvalOptions &options) {
  ScoredBatch batch;
  batch.scores.resize(records.size());
  batch.errors.resize(records.size());
  const std::string policy_hash = scoring_policy_hash(policy);
  const std::string model_id = pipeline.backend().model_id();

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr failure;

  const auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) {
        return;
      }
      const auto &record = records[i];
      const std::string key = ScoreCache::key(record, policy_hash, model_id);
      if (auto hit = cache.find(key)) {
        batch.scores[i] = std::move(*hit);
        continue;
      }
      try {
        GuardInput input{record.role, record.text, record.context, record.language};
        CheckOutcome outcome = pipeline.run(input, policy, options.redact);
        CachedScore score;
        if (outcome.verdict.score) {
          score.p_unsafe = outcome.verdict.score->value();
        }
        score.categories = std::move(outcome.candidate_categories);
        score.model_id = outcome.verdict.model_id;
        cache.insert(key, score);
        batch.scores[i] = std::move(score);
      } catch (const GuardError &e) {
        if (e.code() == ErrorCode::Timeout) {
          batch.errors[i] = e.what();
          continue;
        }
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      }
    }
  };

  const std::size_t threads = std::min(options.max_in_flight, std::max<std::size_t>(1, records.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto &t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return batch;
}

std::vector<RecordResult> label_all(const std::vector<EvalRecord> &records, const ScoredBatch &batch,
                                    const PolicyConfig &policy) {
  std::vector<RecordResult> results;
  results.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto &record = records[i];
    RecordResult r;
    r.id = record.id;
    r.source = record.source;
    r.role = record.role;
    r.gold = record.gold_label;
    if (const auto &score = batch.scores[i]) {
      const SafetyVerdict verdict = rethreshold(*score, policy);
      r.predicted = verdict.label;
      r.p_unsafe = score->p_unsafe;
      r.tau = verdict.applied_threshold;
      r.categories = verdict.triggered_categories;
    } else {
      r.excluded = true;
      r.error = batch.errors[i];
      r.tau = resolve_threshold(policy);
    }
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(), [](const RecordResult &a, const RecordResult &b) {
    return std::tie(a.source, a.id) < std::tie(b.source, b.id);
  });
  return results;
}

}  // namespace

std::vector<RecordResult> Evaluator::run(const std::vector<EvalRecord> &records, const PolicyConfig &policy) {
  const auto validated = validate_policy(policy, pipeline_.taxonomy());
  return label_all(records, score_all(records, validated, pipeline_, cache_, options_), validated);
}

ConfusionCounts Evaluator::evaluate(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                                    std::vector<RecordResult> *results) {
  auto run_results = run(records, policy);
  const ConfusionCounts counts = count(run_results);
  if (results) {
    *results = std::move(run_results);
  }
  return counts;
}

std::vector<SweepRow> Evaluator::threshold_sweep(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                                                 const std::vector<double> &grid) {
  check_tau_grid(grid);
  const auto validated = validate_policy(policy, pipeline_.taxonomy());
  const ScoredBatch batch = score_all(records, validated, pipeline_, cache_, options_);
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double tau : grid) {
    PolicyConfig at_tau = validated;
    at_tau.sensitivity = tau;
    SweepRow row;
    row.tau = tau;
    row.counts = count(label_all(records, batch, at_tau));
    row.prf = f1(row.counts);
    rows.push_back(row);
  }
  return rows;
}

ConfusionCounts evaluate(const std::vector<EvalRecord> &records, const PolicyConfig &policy,
                         const GuardPipeline &pipeline, std::vector<RecordResult> *results) {
  Evaluator evaluator(pipeline);
  return evaluator.evaluate(records, policy, results);
}

void check_tau_grid(const std::vector<double> &grid) {
  if (grid.empty()) {
    throw GuardError(ErrorCode::InvalidRequest, "tau grid is empty");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw GuardError(ErrorCode::ThresholdOutOfRange, nlohmann::json(grid[i]).dump());
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw GuardError(ErrorCode::InvalidRequest, "tau grid must be strictly increasing");
    }
  }
}

std::vector<double> parse_tau_grid(const std::string &spec) {
  std::vector<double> grid;
  const auto parse = [&](const std::string &s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception &) {
      throw GuardError(ErrorCode::InvalidRequest, "bad tau grid value '" + s + "'");
    }
  };
  if (std::count(spec.begin(), spec.end(), ':') == 2) {
    const auto a = spec.find(':');
    const auto b = spec.find(':', a + 1);
    const double start = parse(spec.substr(0, a));
    const double stop = parse(spec.substr(a + 1, b - a - 1));
    const double step = parse(spec.substr(b + 1));
    if (!(step > 0)) {
      throw GuardError(ErrorCode::InvalidRequest, "tau grid step must be positive");
    }
    for (std::size_t k = 0;; ++k) {
      double v = std::round((start + static_cast<double>(k) * step) * 1e12) / 1e12;
      if (v > stop + 1e-12) break;
      grid.push_back(std::min(v, stop));
    }
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) grid.push_back(parse(item));
    }
  }
  check_tau_grid(grid);
  return grid;
}

bool operator==(const SweepRow &a, const SweepRow &b) {
  return a.tau == b.tau && a.counts == b.counts && a.prf == b.prf;
}

bool operator==(const MetricsReport &a, const MetricsReport &b) {
  return a.label == b.label && a.model_id == b.model_id && a.policy_id == b.policy_id && a.tau == b.tau &&
         a.datasets == b.datasets && a.macro == b.macro && a.sweep == b.sweep && a.runtime == b.runtime;
}

MetricsReport build_report(const std::string &label, const std::string &model_id, const PolicyConfig &policy,
                           const std::vector<RecordResult> &results) {
  MetricsReport report;
  report.label = label;
  report.model_id = model_id;
  report.policy_id = policy.policy_id;
  report.tau = resolve_threshold(policy);
  report.runtime.records = results.size();

  std::vector<std::string> order;
  std::map<std::string, DatasetMetrics> by_source;
  for (const auto &r : results) {
    auto [it, inserted] = by_source.try_emplace(r.source);
    if (inserted) {
      order.push_back(r.source);
      it->second.dataset = r.source;
    }
    auto &m = it->second;
    ++m.total;
    if (r.excluded || !r.predicted) {
      ++m.excluded;
    } else {
      m.counts.add(r.gold, *r.predicted);
    }
  }
  for (const auto &name : order) {
    auto m = by_source[name];
    m.prf = f1(m.counts);
    report.datasets.push_back(std::move(m));
  }
  if (!report.datasets.empty()) {
    double p = 0, r = 0, f = 0;
    for (const auto &m : report.datasets) {
      p += m.prf.precision;
      r += m.prf.recall;
      f += m.prf.f1;
    }
    const auto n = static_cast<double>(report.datasets.size());
    report.macro = {p / n, r / n, f / n};
  }
  return report;
}

json to_json(const MetricsReport &report) {
  json datasets = json::array();
  for (const auto &m : report.datasets) {
    json d = counts_json(m.counts);
    d["dataset"] = m.dataset;
    d.update(prf_json(m.prf));
    d["total"] = m.total;
    d["excluded"] = m.excluded;
    d["exclusion_rate"] = m.total == 0 ? 0.0 : static_cast<double>(m.excluded) / static_cast<double>(m.total);
    datasets.push_back(std::move(d));
  }
  json sweep = json::array();
  for (const auto &row : report.sweep) {
    json s = counts_json(row.counts);
    s["tau"] = row.tau;
    s.update(prf_json(row.prf));
    sweep.push_back(std::move(s));
  }
  return {{"label", report.label},
          {"model_id", report.model_id},
          {"policy_id", report.policy_id},
          {"tau", report.tau},
          {"conventions", std::string(kMetricConventions)},
          {"datasets", datasets},
          {"macro", prf_json(report.macro)},
          {"sweep", sweep},
          {"runtime",
           {{"records", report.runtime.records},
            {"backend_queries", report.runtime.backend_queries},
            {"wall_ms", report.runtime.wall_ms}}}};
}

MetricsReport report_from_json(const json &j) {
  MetricsReport report;
  report.label = j.at("label").get<std::string>();
  report.model_id = j.value("model_id", std::string());
  report.policy_id = j.value("policy_id", std::string());
  report.tau = j.at("tau").get<double>();
  for (const auto &d : j.at("datasets")) {
    DatasetMetrics m;
    m.dataset = d.at("dataset").get<std::string>();
    m.counts = counts_from_json(d);
    m.prf = prf_from_json(d);
    m.total = d.value("total", std::size_t{0});
    m.excluded = d.value("excluded", std::size_t{0});
    report.datasets.push_back(std::move(m));
  }
  report.macro = prf_from_json(j.at("macro"));
  for (const auto &s : j.value("sweep", json::array())) {
    report.sweep.push_back({s.at("tau").get<double>(), counts_from_json(s), prf_from_json(s)});
  }
  if (j.contains("runtime")) {
    const auto &rt = j["runtime"];
    report.runtime = {rt.value("records", std::size_t{0}), rt.value("backend_queries", std::size_t{0}),
                      rt.value("wall_ms", 0.0)};
  }
  return report;
}

std::string render_markdown(const std::vector<MetricsReport> &reports) {
  std::vector<std::string> columns;
  for (const auto &report : reports) {
    for (const auto &m : report.datasets) {
      if (std::find(columns.begin(), columns.end(), m.dataset) == columns.end()) {
        columns.push_back(m.dataset);
      }
    }
  }

  std::ostringstream out;
  out << "| Model |";
  for (const auto &c : columns) out << ' ' << c << " |";
  out << " Avg. |\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
  out << "---:|\n";
  for (const auto &report : reports) {
    out << "| " << report.label << " (tau=" << fixed(report.tau, 2) << ") |";
    for (const auto &c : columns) {
      const auto it = std::find_if(report.datasets.begin(), report.datasets.end(),
                                   [&](const DatasetMetrics &m) { return m.dataset == c; });
      out << ' ' << (it == report.datasets.end() ? std::string("-") : percent(it->prf.f1)) << " |";
    }
    out << ' ' << percent(report.macro.f1) << " |\n";
  }
  out << "\nF1 x 100; " << kMetricConventions << ".\n";

  for (const auto &report : reports) {
    bool any_excluded = false;
    for (const auto &m : report.datasets) any_excluded |= m.excluded > 0;
    if (any_excluded) {
      out << "\nExclusions for " << report.label << ":";
      for (const auto &m : report.datasets) {
        out << ' ' << m.dataset << ' ' << m.excluded << '/' << m.total;
      }
      out << '\n';
    }
    if (!report.sweep.empty()) {
      out << "\nThreshold sweep: " << report.label << "\n\n| tau | precision | recall | F1 |\n|---:|---:|---:|---:|\n";
      for (const auto &row : report.sweep) {
        out << "| " << fixed(row.tau, 2) << " | " << fixed(row.prf.precision, 4) << " | " << fixed(row.prf.recall, 4)
            << " | " << fixed(row.prf.f1, 4) << " |\n";
      }
    }
  }
  return out.str();
}

std::string render_json(const std::vector<MetricsReport> &reports) {
  json arr = json::array();
  for (const auto &r : reports) arr.push_back(to_json(r));
  return arr.dump(2) + "\n";
}

SyntheticSuite make_synthetic_suite(const SyntheticOptions &options, const CategoryTaxonomy &taxonomy) {
  static const std::vector<std::string> openers = {
      "Could you help me with this", "I keep thinking about", "Quick question regarding",
      "Please summarise the notes on", "My colleague mentioned", "Write a short paragraph about"};
  static const std::vector<std::string> fillers = {"the quarterly plan", "a garden project", "the museum trip",
                                                   "our onboarding doc", "a travel budget", "the team offsite"};
  SyntheticSuite suite;
  std::mt19937_64 rng(options.seed);
  const auto n = options.records;
  const auto n_unsafe = static_cast<std::size_t>(std::llround(options.unsafe_fraction * static_cast<double>(n)));
  std::vector<bool> unsafe(n, false);
  std::fill(unsafe.begin(), unsafe.begin() + static_cast<std::ptrdiff_t>(std::min(n_unsafe, n)), true);
  std::shuffle(unsafe.begin(), unsafe.end(), rng);
  std::bernoulli_distribution invert(options.inverted_fraction);
  std::uniform_int_distribution<std::size_t> pick(0, openers.size() - 1);
  std::bernoulli_distribution response_role(0.3);

  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    char phrase[32];
    std::snprintf(phrase, sizeof(phrase), unsafe[i] ? "xunsafe%06zux" : "xbenign%06zux", i);

    EvalRecord r;
    r.id = id;
    r.role = response_role(rng) ? GuardRole::response : GuardRole::prompt;
    r.text = openers[pick(rng)] + " " + fillers[pick(rng)] + " " + phrase + " thanks.";
    r.gold_label = unsafe[i] ? Label::unsafe : Label::safe;
    r.language = "en";
    r.source = options.datasets[i % options.datasets.size()];
    if (r.role == GuardRole::response) {
      r.context.push_back({GuardRole::prompt, openers[pick(rng)] + " " + fillers[pick(rng)] + "?"});
    }

    LexiconEntry entry;
    entry.weight = unsafe[i] ? options.phrase_weight : -options.phrase_weight;
    if (unsafe[i]) {
      entry.category = taxonomy.categories()[i % taxonomy.categories().size()].id;
    }
    if (invert(rng)) {
      entry.weight = -entry.weight;
      suite.inverted_ids.push_back(r.id);
    }
    suite.lexicon.emplace(phrase, entry);
    suite.records.push_back(std::move(r));
  }
  return suite;
}

}  // namespace guardgate::eval
