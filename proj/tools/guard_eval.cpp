#include "guardgate/errors.hpp"
#include "guardgate/eval.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace ge = guardgate::eval;
using nlohmann::json;

namespace {

struct RunArgs {
  std::vector<std::string> datasets;
  std::string policy;
  std::string backend = "stub";
  std::string lexicon;
  std::uint64_t seed = 7;
  std::string remote_config;
  std::string taxonomy;
  std::string tau_grid;
  std::string label;
  std::string out;
  std::string records_out;
  std::string cache;
  std::size_t max_in_flight = 8;
  bool redact = false;
  int deadline_ms = 5000;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "md";
  std::string out;
};

struct SynthArgs {
  ge::SyntheticOptions options;
  std::string dataset_out;
  std::string lexicon_out;
};

void write_text(const std::string &path, const std::string &text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw guardgate::GuardError(guardgate::ErrorCode::IoError, "cannot write " + path);
}

int run(const RunArgs &a) {
  using namespace guardgate;
  std::vector<ge::EvalRecord> records;
  for (const auto &path : a.datasets) {
    auto load = ge::load_dataset(path);
    for (const auto &w : load.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto &m : load.malformed) std::cerr << path << ":" << m.line << ": skipped: " << m.reason << '\n';
    records.insert(records.end(), load.records.begin(), load.records.end());
  }

  CategoryTaxonomy taxonomy = a.taxonomy.empty() ? CategoryTaxonomy::default_taxonomy() : load_taxonomy_file(a.taxonomy);
  PolicyConfig policy = a.policy.empty() ? default_policy(taxonomy, "eval") : load_policy_file(a.policy);
  policy = validate_policy(policy, taxonomy);

  std::shared_ptr<const DetectorBackend> inner;
  if (a.backend == "remote") {
    if (a.remote_config.empty()) throw GuardError(ErrorCode::InvalidConfig, "--backend remote needs --remote-config");
    inner = std::make_shared<RemoteBackend>(remote_endpoint_from_json(load_document(a.remote_config)));
  } else {
    inner = std::make_shared<StubBackend>(a.lexicon.empty() ? default_lexicon() : load_lexicon_file(a.lexicon), a.seed);
  }
  auto backend = std::make_shared<CountingBackend>(inner);
  PipelineOptions pipeline_options;
  pipeline_options.backend_deadline = std::chrono::milliseconds(a.deadline_ms);
  GuardPipeline pipeline(taxonomy, backend, pipeline_options);
  ge::Evaluator evaluator(pipeline, {a.max_in_flight, a.redact});
  if (!a.cache.empty()) evaluator.cache().load(a.cache);

  const auto started = std::chrono::steady_clock::now();
  const auto results = evaluator.run(records, policy);
  ge::MetricsReport report =
      ge::build_report(a.label.empty() ? backend->model_id() : a.label, backend->model_id(), policy, results);
  if (!a.tau_grid.empty()) {
    report.sweep = evaluator.threshold_sweep(records, policy, ge::parse_tau_grid(a.tau_grid));
  }
  report.runtime.backend_queries = backend->queries();
  report.runtime.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  if (!a.cache.empty()) evaluator.cache().save(a.cache);
  if (!a.records_out.empty()) ge::write_record_results(a.records_out, results);
  if (!a.out.empty()) write_text(a.out, ge::to_json(report).dump(2) + "\n");
  std::cout << ge::render_markdown({report});
  return 0;
}

int report(const ReportArgs &a) {
  std::vector<ge::MetricsReport> reports;
  for (const auto &path : a.inputs) {
    const json doc = guardgate::load_document(path);
    if (doc.is_array()) {
      for (const auto &r : doc) reports.push_back(ge::report_from_json(r));
    } else {
      reports.push_back(ge::report_from_json(doc));
    }
  }
  write_text(a.out, a.format == "json" ? ge::render_json(reports) : ge::render_markdown(reports));
  return 0;
}

int synth(const SynthArgs &a) {
  const auto suite = ge::make_synthetic_suite(a.options, guardgate::CategoryTaxonomy::default_taxonomy());
  ge::write_dataset(a.dataset_out, suite.records);
  write_text(a.lexicon_out, guardgate::to_json(suite.lexicon).dump(2) + "\n");
  std::cerr << "wrote " << suite.records.size() << " records (" << suite.inverted_ids.size()
            << " inverted lexicon entries)\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Evaluation harness: F1, threshold sweeps and report tables"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto *run_cmd = app.add_subcommand("run", "score datasets and print a metrics table");
  run_cmd->add_option("--dataset", run_args.datasets, "JSONL dataset (repeatable)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--policy", run_args.policy, "policy file (JSON/YAML); default enables every category");
  run_cmd->add_option("--backend", run_args.backend)->check(CLI::IsMember({"stub", "remote"}));
  run_cmd->add_option("--lexicon", run_args.lexicon, "stub lexicon file");
  run_cmd->add_option("--seed", run_args.seed, "stub jitter seed");
  run_cmd->add_option("--remote-config", run_args.remote_config, "remote endpoint JSON/YAML");
  run_cmd->add_option("--taxonomy", run_args.taxonomy, "taxonomy file");
  run_cmd->add_option("--tau-grid", run_args.tau_grid, "\"0,0.5,1\" or \"start:stop:step\"");
  run_cmd->add_option("--label", run_args.label, "row label in the table");
  run_cmd->add_option("--out", run_args.out, "write the report as JSON");
  run_cmd->add_option("--records-out", run_args.records_out, "write record-level results (JSONL)");
  run_cmd->add_option("--cache", run_args.cache, "score cache file, read and updated");
  run_cmd->add_option("--max-in-flight", run_args.max_in_flight)->check(CLI::PositiveNumber);
  run_cmd->add_flag("--redact", run_args.redact, "mask PII before scoring");
  run_cmd->add_option("--deadline-ms", run_args.deadline_ms, "per-query backend deadline")->check(CLI::PositiveNumber);

  ReportArgs report_args;
  auto *report_cmd = app.add_subcommand("report", "render saved JSON reports");
  report_cmd->add_option("--in", report_args.inputs, "report JSON (repeatable)")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--format", report_args.format)->check(CLI::IsMember({"md", "json"}));
  report_cmd->add_option("--out", report_args.out, "output file (default stdout)");

  SynthArgs synth_args;
  auto *synth_cmd = app.add_subcommand("synth", "generate a labelled synthetic suite and matching stub lexicon");
  synth_cmd->add_option("--records", synth_args.options.records);
  synth_cmd->add_option("--unsafe-fraction", synth_args.options.unsafe_fraction)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--inverted-fraction", synth_args.options.inverted_fraction)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--seed", synth_args.options.seed);
  synth_cmd->add_option("--datasets", synth_args.options.datasets, "dataset names assigned round-robin")->delimiter(',');
  synth_cmd->add_option("--dataset-out", synth_args.dataset_out)->required();
  synth_cmd->add_option("--lexicon-out", synth_args.lexicon_out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(run_args);
    if (*report_cmd) return report(report_args);
    if (*synth_cmd) return synth(synth_args);
  } catch (const guardgate::ValidationError &e) {
    for (const auto &v : e.violations()) {
      std::cerr << "error: " << guardgate::to_string(v.code) << " " << v.field << ": " << v.detail << '\n';
    }
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
