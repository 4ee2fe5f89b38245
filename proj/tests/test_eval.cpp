#include <gtest/gtest.h>

#include "guardgate/errors.hpp"
#include "guardgate/eval.hpp"
#include "test_support.hpp"

#include <random>

using namespace guardgate;
using namespace guardgate::eval;
using nlohmann::json;

namespace {

const CategoryTaxonomy &taxonomy() { return CategoryTaxonomy::default_taxonomy(); }

std::string record_line(const std::string &id, const std::string &text, const std::string &gold) {
  return json{{"id", id}, {"role", "prompt"}, {"text", text}, {"gold_label", gold}}.dump();
}

struct Harness {
  std::shared_ptr<CountingBackend> backend;
  GuardPipeline pipeline;

  explicit Harness(Lexicon lexicon, std::uint64_t seed = 7)
      : backend(std::make_shared<CountingBackend>(std::make_shared<StubBackend>(std::move(lexicon), seed))),
        pipeline(taxonomy(), backend) {}
};

SyntheticSuite suite(std::size_t n, double inverted = 0.0, std::vector<std::string> datasets = {"synthetic"}) {
  SyntheticOptions o;
  o.records = n;
  o.inverted_fraction = inverted;
  o.datasets = std::move(datasets);
  return make_synthetic_suite(o, taxonomy());
}

// Recount from scratch.
ConfusionCounts brute_force(const std::vector<RecordResult> &results) {
  ConfusionCounts c;
  for (const auto &r : results) {
    if (r.excluded) continue;
    const bool g = r.gold == Label::unsafe;
    const bool p = *r.predicted == Label::unsafe;
    if (g && p) ++c.tp;
    if (!g && p) ++c.fp;
    if (g && !p) ++c.fn;
    if (!g && !p) ++c.tn;
  }
  return c;
}

class TimeoutOn final : public DetectorBackend {
 public:
  TimeoutOn(std::string needle, std::shared_ptr<const DetectorBackend> inner)
      : needle_(std::move(needle)), inner_(std::move(inner)) {}
  BackendResponse query(const BackendRequest &request) const override {
    if (request.guard_prompt.find(needle_) != std::string::npos) {
      throw GuardError(ErrorCode::Timeout, "deadline exceeded");
    }
    return inner_->query(request);
  }
  std::string model_id() const override { return inner_->model_id(); }

 private:
  std::string needle_;
  std::shared_ptr<const DetectorBackend> inner_;
};

class FailOn final : public DetectorBackend {
 public:
  BackendResponse query(const BackendRequest &) const override {
    throw GuardError(ErrorCode::AuthRejected, "401");
  }
  std::string model_id() const override { return "fail"; }
};

}  // namespace

// --- loader --------------------------------------------------------------------

TEST(Loader, ReadsRecordsInFileOrder) {
  gg_test::TempDir dir;
  const auto path = dir.path() / "mini.jsonl";
  gg_test::write_file(path, record_line("b", "hello", "safe") + "\n\n" + record_line("a", "a bomb", "UNSAFE") + "\n" +
                                json{{"id", "c"},
                                     {"role", "response"},
                                     {"text", "sure"},
                                     {"gold_label", "safe"},
                                     {"source", "other"},
                                     {"language", "en"},
                                     {"context", {{{"role", "prompt"}, {"text", "hi"}}}}}
                                    .dump() +
                                "\n");
  const auto load = load_dataset(path);
  ASSERT_EQ(load.records.size(), 3u);
  EXPECT_TRUE(load.malformed.empty());
  EXPECT_EQ(load.records[0].id, "b");
  EXPECT_EQ(load.records[0].source, "mini");
  EXPECT_EQ(load.records[1].gold_label, Label::unsafe);
  EXPECT_EQ(load.records[2].source, "other");
  EXPECT_EQ(load.records[2].role, GuardRole::response);
  ASSERT_EQ(load.records[2].context.size(), 1u);
  EXPECT_EQ(load.records[2].language, "en");
}

TEST(Loader, WriteThenLoadRoundTrips) {
  gg_test::TempDir dir;
  const auto s = suite(50);
  write_dataset(dir.path() / "s.jsonl", s.records);
  EXPECT_EQ(load_dataset(dir.path() / "s.jsonl").records, s.records);
}

TEST(Loader, ToleratesOnePercentMalformed) {
  gg_test::TempDir dir;
  std::string text;
  for (int i = 0; i < 100; ++i) text += record_line("r" + std::to_string(i), "text", "safe") + "\n";
  text += json{{"id", "x"}, {"role", "prompt"}, {"text", "no label"}}.dump() + "\n";
  gg_test::write_file(dir.path() / "d.jsonl", text);
  const auto load = load_dataset(dir.path() / "d.jsonl");
  EXPECT_EQ(load.records.size(), 100u);
  ASSERT_EQ(load.malformed.size(), 1u);
  EXPECT_EQ(load.malformed[0].line, 101u);
  EXPECT_NE(load.malformed[0].reason.find("gold_label"), std::string::npos);

  text += "{broken\n";
  gg_test::write_file(dir.path() / "d.jsonl", text);
  try {
    load_dataset(dir.path() / "d.jsonl");
    FAIL() << "expected TooManyMalformed";
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyMalformed);
  }
}

TEST(Loader, RejectsBadFields) {
  for (const json &bad : {json{{"id", ""}, {"role", "prompt"}, {"text", "t"}, {"gold_label", "safe"}},
                          json{{"id", "a"}, {"role", "user"}, {"text", "t"}, {"gold_label", "safe"}},
                          json{{"id", "a"}, {"role", "prompt"}, {"text", "   "}, {"gold_label", "safe"}},
                          json{{"id", "a"}, {"role", "prompt"}, {"text", "t"}, {"gold_label", "maybe"}},
                          json::array()}) {
    EXPECT_THROW(eval_record_from_json(bad, "src"), std::invalid_argument) << bad.dump();
  }
}

TEST(Loader, EmptyFileAndDuplicatesWarn) {
  gg_test::TempDir dir;
  gg_test::write_file(dir.path() / "empty.jsonl", "");
  auto load = load_dataset(dir.path() / "empty.jsonl");
  EXPECT_TRUE(load.records.empty());
  EXPECT_EQ(load.warnings.size(), 1u);

  gg_test::write_file(dir.path() / "dup.jsonl",
                      record_line("a", "x", "safe") + "\n" + record_line("a", "y", "safe") + "\n");
  load = load_dataset(dir.path() / "dup.jsonl");
  EXPECT_EQ(load.records.size(), 2u);
  ASSERT_EQ(load.warnings.size(), 1u);
  EXPECT_NE(load.warnings[0].find("duplicate"), std::string::npos);
}

TEST(Loader, MissingFile) {
  try {
    load_dataset("/nonexistent/dir/x.jsonl");
    FAIL();
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::FileMissing);
  }
}

// --- metrics -------------------------------------------------------------------

TEST(Metrics, F1Examples) {
  auto m = f1({.tp = 2, .fp = 1, .fn = 1, .tn = 5});
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);

  m = f1({.tp = 4, .fp = 0, .fn = 0, .tn = 3});
  EXPECT_EQ(m, (Prf{1.0, 1.0, 1.0}));

  m = f1({.tp = 1, .fp = 3, .fn = 0, .tn = 0});
  EXPECT_DOUBLE_EQ(m.precision, 0.25);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 0.4);
}

TEST(Metrics, ZeroDenominatorConventions) {
  EXPECT_EQ(f1({}), (Prf{0.0, 0.0, 0.0}));
  EXPECT_EQ(f1({.tp = 0, .fp = 0, .fn = 0, .tn = 9}), (Prf{0.0, 0.0, 0.0}));
  EXPECT_EQ(f1({.tp = 0, .fp = 2, .fn = 0, .tn = 0}), (Prf{0.0, 0.0, 0.0}));
  EXPECT_EQ(f1({.tp = 0, .fp = 0, .fn = 3, .tn = 0}), (Prf{0.0, 0.0, 0.0}));
}

TEST(Metrics, CountsAccumulate) {
  ConfusionCounts c;
  c.add(Label::unsafe, Label::unsafe);
  c.add(Label::safe, Label::unsafe);
  c.add(Label::unsafe, Label::safe);
  c.add(Label::safe, Label::safe);
  c.add(Label::safe, Label::safe);
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 2}));
  ConfusionCounts d = c;
  d += c;
  EXPECT_EQ(d.total(), 10u);
}

TEST(Metrics, RandomCountsMatchBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RecordResult> results(rng() % 60);
    for (std::size_t i = 0; i < results.size(); ++i) {
      auto &r = results[i];
      r.id = std::to_string(i);
      r.gold = rng() % 2 ? Label::unsafe : Label::safe;
      r.excluded = rng() % 10 == 0;
      if (!r.excluded) r.predicted = rng() % 2 ? Label::unsafe : Label::safe;
    }
    const auto c = count(results);
    EXPECT_EQ(c, brute_force(results));
    const auto m = f1(c);
    const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    EXPECT_NEAR(m.precision, p, 1e-12);
    EXPECT_NEAR(m.recall, r, 1e-12);
    EXPECT_NEAR(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-12);
  }
}

// --- evaluation ----------------------------------------------------------------

TEST(Evaluate, EmptyInputIsZero) {
  Harness h(gg_test::test_lexicon());
  EXPECT_EQ(evaluate({}, default_policy(taxonomy()), h.pipeline), ConfusionCounts{});
  EXPECT_EQ(h.backend->queries(), 0u);
}

TEST(Evaluate, PerfectLexiconGivesPerfectF1) {
  const auto s = suite(200);
  Harness h(s.lexicon);
  std::vector<RecordResult> results;
  const auto c = evaluate(s.records, default_policy(taxonomy()), h.pipeline, &results);
  EXPECT_EQ(c.total(), 200u);
  EXPECT_EQ(c.fp + c.fn, 0u);
  EXPECT_EQ(f1(c).f1, 1.0);
  EXPECT_EQ(results.size(), 200u);
  EXPECT_TRUE(std::is_sorted(results.begin(), results.end(),
                             [](const auto &a, const auto &b) { return std::tie(a.source, a.id) < std::tie(b.source, b.id); }));
}

TEST(Evaluate, InvalidPolicyRejected) {
  Harness h(gg_test::test_lexicon());
  PolicyConfig bad = default_policy(taxonomy());
  bad.enabled_categories.insert("not-a-category");
  Evaluator ev(h.pipeline);
  EXPECT_THROW(ev.run(suite(4).records, bad), ValidationError);
}

TEST(Evaluate, CacheAvoidsRequery) {
  const auto s = suite(60);
  Harness h(s.lexicon);
  Evaluator ev(h.pipeline);
  auto policy = default_policy(taxonomy());
  const auto first = ev.run(s.records, policy);
  EXPECT_EQ(h.backend->queries(), 60u);
  policy.sensitivity = 0.9;
  policy.per_category_overrides["fraud"] = 0.2;
  const auto second = ev.run(s.records, policy);
  EXPECT_EQ(h.backend->queries(), 60u);
  EXPECT_EQ(second.size(), first.size());

  // Cache entries survive a save/load cycle and serve a fresh evaluator.
  gg_test::TempDir dir;
  ev.cache().save(dir.path() / "cache.jsonl");
  Evaluator ev2(h.pipeline);
  ev2.cache().load(dir.path() / "cache.jsonl");
  EXPECT_EQ(ev2.cache().size(), ev.cache().size());
  EXPECT_EQ(ev2.run(s.records, policy), second);
  EXPECT_EQ(h.backend->queries(), 60u);

  // Changing the scored categories is a new cache key.
  policy.enabled_categories.erase("fraud");
  ev.run(s.records, policy);
  EXPECT_EQ(h.backend->queries(), 120u);
}

TEST(Evaluate, CachedLabelsMatchFreshPipeline) {
  const auto s = suite(80, 0.2);
  Harness h(s.lexicon);
  Evaluator ev(h.pipeline);
  auto policy = default_policy(taxonomy());
  ev.run(s.records, policy);
  for (double tau : {0.05, 0.3, 0.62, 0.97}) {
    policy.sensitivity = tau;
    policy.per_category_overrides = {{"violent", 0.4}};
    const auto cached = ev.run(s.records, policy);
    Harness fresh(s.lexicon);
    std::vector<RecordResult> direct;
    evaluate(s.records, policy, fresh.pipeline, &direct);
    EXPECT_EQ(cached, direct) << tau;
  }
}

TEST(Evaluate, TimeoutsAreExcluded) {
  auto s = suite(40);
  s.records[3].text += " slowpoke";
  s.records[17].text += " slowpoke";
  auto inner = std::make_shared<StubBackend>(s.lexicon, 7);
  GuardPipeline pipeline(taxonomy(), std::make_shared<TimeoutOn>("slowpoke", inner));
  std::vector<RecordResult> results;
  const auto c = evaluate(s.records, default_policy(taxonomy()), pipeline, &results);
  EXPECT_EQ(c.total(), 38u);
  std::size_t excluded = 0;
  for (const auto &r : results) {
    if (r.excluded) {
      ++excluded;
      EXPECT_FALSE(r.predicted.has_value());
      EXPECT_FALSE(r.error.empty());
    }
  }
  EXPECT_EQ(excluded, 2u);
  const auto report = build_report("t", "m", default_policy(taxonomy()), results);
  EXPECT_EQ(report.datasets[0].excluded, 2u);
  EXPECT_NE(render_markdown({report}).find("excluded"), std::string::npos);
}

TEST(Evaluate, OtherBackendErrorsPropagate) {
  GuardPipeline pipeline(taxonomy(), std::make_shared<FailOn>());
  try {
    evaluate(suite(5).records, default_policy(taxonomy()), pipeline);
    FAIL();
  } catch (const GuardError &e) {
    EXPECT_EQ(e.code(), ErrorCode::AuthRejected);
  }
}

// --- sweep -----------------------------------------------------------------------

TEST(Sweep, OnePassAndMonotoneRecall) {
  const auto s = suite(300, 0.15);
  Harness h(s.lexicon);
  Evaluator ev(h.pipeline);
  const auto grid = parse_tau_grid("0:1:0.05");
  const auto rows = ev.threshold_sweep(s.records, default_policy(taxonomy()), grid);
  EXPECT_EQ(h.backend->queries(), 300u);
  ASSERT_EQ(rows.size(), grid.size());
  EXPECT_EQ(rows.front().prf.recall, 1.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].prf.recall, rows[i - 1].prf.recall);
    EXPECT_LE(rows[i].counts.tp + rows[i].counts.fp, rows[i - 1].counts.tp + rows[i - 1].counts.fp);
    EXPECT_EQ(rows[i].counts.total(), 300u);
  }
  for (const auto &row : rows) {
    if (std::abs(row.tau - 0.5) < 1e-12) {
      auto policy = default_policy(taxonomy());
      policy.sensitivity = 0.5;
      Harness fresh(s.lexicon);
      EXPECT_EQ(row.counts, evaluate(s.records, policy, fresh.pipeline));
    }
  }
}

TEST(Sweep, GridValidation) {
  EXPECT_EQ(parse_tau_grid("0.1,0.5,0.9"), (std::vector<double>{0.1, 0.5, 0.9}));
  const auto g = parse_tau_grid("0:1:0.25");
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(parse_tau_grid("0:1:0.1").size(), 11u);
  EXPECT_THROW(check_tau_grid({0.5, 0.4}), GuardError);
  EXPECT_THROW(check_tau_grid({0.5, 0.5}), GuardError);
  EXPECT_THROW(check_tau_grid({-0.1}), GuardError);
  EXPECT_THROW(check_tau_grid({1.5}), GuardError);
  EXPECT_THROW(check_tau_grid({}), GuardError);
  EXPECT_ANY_THROW(parse_tau_grid("a,b"));
  EXPECT_ANY_THROW(parse_tau_grid("0:1:0"));
}

// --- reports ---------------------------------------------------------------------

TEST(Report, MacroAverageAndColumns) {
  const auto s = suite(120, 0.2, {"alpha", "beta"});
  Harness h(s.lexicon);
  std::vector<RecordResult> results;
  const auto policy = default_policy(taxonomy());
  evaluate(s.records, policy, h.pipeline, &results);
  const auto report = build_report("stub", h.backend->model_id(), policy, results);
  ASSERT_EQ(report.datasets.size(), 2u);
  EXPECT_EQ(report.datasets[0].dataset, "alpha");
  EXPECT_EQ(report.datasets[1].dataset, "beta");
  EXPECT_NEAR(report.macro.f1, (report.datasets[0].prf.f1 + report.datasets[1].prf.f1) / 2, 1e-12);
  std::vector<RecordResult> alpha;
  for (const auto &r : results) {
    if (r.source == "alpha") alpha.push_back(r);
  }
  EXPECT_EQ(report.datasets[0].counts, brute_force(alpha));

  const auto md = render_markdown({report});
  EXPECT_NE(md.find("| Model | alpha | beta | Avg. |"), std::string::npos) << md;
}

TEST(Report, DeterministicAndRoundTrips) {
  const auto s = suite(90, 0.1, {"a", "b", "c"});
  const auto policy = default_policy(taxonomy());
  std::string first;
  for (int run = 0; run < 2; ++run) {
    Harness h(s.lexicon);
    Evaluator ev(h.pipeline, {.max_in_flight = run == 0 ? 1u : 8u});
    auto results = ev.run(s.records, policy);
    auto report = build_report("stub", h.backend->model_id(), policy, results);
    report.sweep = ev.threshold_sweep(s.records, policy, {0.25, 0.5, 0.75});
    EXPECT_EQ(report_from_json(to_json(report)), report);
    const auto md = render_markdown({report});
    if (run == 0) {
      first = md;
    } else {
      EXPECT_EQ(md, first);
    }
  }
}

TEST(Report, MarkdownGolden) {
  std::vector<RecordResult> results;
  const auto add = [&](std::string src, std::string id, Label gold, std::optional<Label> pred) {
    RecordResult r;
    r.source = std::move(src);
    r.id = std::move(id);
    r.gold = gold;
    r.predicted = pred;
    r.excluded = !pred;
    if (!pred) r.error = "Timeout";
    results.push_back(r);
  };
  add("toxic-chat", "1", Label::unsafe, Label::unsafe);
  add("toxic-chat", "2", Label::unsafe, Label::safe);
  add("toxic-chat", "3", Label::safe, Label::unsafe);
  add("toxic-chat", "4", Label::safe, Label::safe);
  add("xstest", "1", Label::unsafe, Label::unsafe);
  add("xstest", "2", Label::safe, Label::safe);
  add("xstest", "3", Label::safe, std::nullopt);
  const auto policy = default_policy(taxonomy());
  auto a = build_report("guard-a", "model-a", policy, results);
  auto b = build_report("guard-b", "model-b", policy, {results.begin(), results.begin() + 4});
  b.sweep = {{0.3, {2, 1, 0, 1}, f1({2, 1, 0, 1})}, {0.7, {1, 0, 1, 2}, f1({1, 0, 1, 2})}};
  EXPECT_TRUE(gg_test::matches_golden("report_table.md", render_markdown({a, b})));
  EXPECT_EQ(render_json({a, b}), render_json({a, b}));
  EXPECT_EQ(json::parse(render_json({a, b})).size(), 2u);
}

TEST(Report, RecordResultsRoundTrip) {
  const auto s = suite(30);
  Harness h(s.lexicon);
  const auto results = Evaluator(h.pipeline).run(s.records, default_policy(taxonomy()));
  gg_test::TempDir dir;
  write_record_results(dir.path() / "r.jsonl", results);
  EXPECT_EQ(read_record_results(dir.path() / "r.jsonl"), results);
}

// --- synthetic suite ---------------------------------------------------------------

TEST(Synthetic, ShapeAndInversions) {
  const auto s = suite(1000, 0.1, {"x", "y"});
  ASSERT_EQ(s.records.size(), 1000u);
  std::size_t unsafe = 0;
  std::set<std::string> ids;
  for (const auto &r : s.records) {
    unsafe += r.gold_label == Label::unsafe;
    ids.insert(r.id);
  }
  EXPECT_EQ(unsafe, 500u);
  EXPECT_EQ(ids.size(), 1000u);
  EXPECT_GT(s.inverted_ids.size(), 50u);
  EXPECT_LT(s.inverted_ids.size(), 150u);
  EXPECT_EQ(suite(1000, 0.1, {"x", "y"}).records, s.records);
}
