// essayfb command-line front end.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "essayfb/annotation.hpp"
#include "essayfb/annotation_service.hpp"
#include "essayfb/corpus.hpp"
#include "essayfb/errors.hpp"
#include "essayfb/experiment.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/llm_client.hpp"
#include "essayfb/random.hpp"
#include "essayfb/records.hpp"
#include "essayfb/report.hpp"
#include "essayfb/scripted_model.hpp"

namespace fs = std::filesystem;
using namespace essayfb;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

// Blocks until SIGINT/SIGTERM, then runs `stop`.
template <class Stop>
void serve_until_interrupted(Stop stop) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  stop();
}

struct CorpusOptions {
  fs::path data;
  fs::path essays;
  fs::path sets;
  fs::path folds;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--data", data, "Directory holding essays.tsv, sets/ and folds.tsv");
    cmd.add_option("--essays", essays, "Essay table (overrides --data)");
    cmd.add_option("--sets", sets, "Directory of set configs (overrides --data)");
    cmd.add_option("--folds", folds, "Fold map (overrides --data)");
  }

  bool given() const { return !data.empty() || !essays.empty(); }

  corpus::Corpus load() const {
    auto pick = [&](const fs::path& explicit_path, const char* name) {
      if (!explicit_path.empty()) return explicit_path;
      if (data.empty()) throw ValidationError(std::string("no --data directory and no --") + name);
      return data / name;
    };
    return corpus::load_corpus(pick(essays, "essays.tsv"), pick(sets, "sets"), pick(folds, "folds.tsv"));
  }
};

struct EndpointOptions {
  fs::path config;
  std::string base_url;
  std::string model;
  std::string api_key_env;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--endpoint", config, "Endpoint config JSON (base_url, model_name, ...)");
    cmd.add_option("--base-url", base_url, "Override the endpoint base URL");
    cmd.add_option("--model", model, "Override the model name");
    cmd.add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
  }

  llm::EndpointConfig apply(llm::EndpointConfig cfg) const {
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw FormatError("cannot open " + config.string());
      const json doc = json::parse(in, nullptr, false);
      if (doc.is_discarded()) throw FormatError(config.string() + ": not valid JSON");
      cfg = llm::endpoint_from_json(doc.contains("endpoint") ? doc["endpoint"] : doc);
    }
    if (!base_url.empty()) cfg.base_url = base_url;
    if (!model.empty()) cfg.model_name = model;
    if (!api_key_env.empty()) cfg.api_key_env = api_key_env;
    cfg.validate();
    return cfg;
  }
};

std::vector<experiment::RunRecord> load_all_records(const std::vector<fs::path>& paths) {
  std::vector<experiment::RunRecord> out;
  for (const auto& p : paths) {
    auto part = experiment::load_records(p);
    spdlog::info("{}: {} records", p.string(), part.size());
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<judge::HelpfulnessJudgment> load_all_judgments(const std::vector<fs::path>& paths) {
  std::vector<judge::HelpfulnessJudgment> out;
  for (const auto& p : paths) {
    auto part = judge::load_judgments(p);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void print_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

// ---------------------------------------------------------------------------

int cmd_ingest(const CorpusOptions& copt, const fs::path& out) {
  const auto c = copt.load();
  json summary;
  summary["essays"] = c.essays.size();
  for (const auto& [id, set] : c.sets) {
    json s;
    s["score_range"] = {set.score_range.min, set.score_range.max};
    s["rubric_levels"] = set.rubric.size();
    s["exemplars"] = set.exemplars.size();
    std::size_t n = 0;
    for (const auto& e : c.essays) n += e.set_id == id;
    s["essays"] = n;
    summary["sets"][std::to_string(id)] = s;
  }
  for (const auto& f : c.folds) {
    summary["folds"].push_back(
        {{"fold", f.fold_index}, {"train", f.train_ids.size()}, {"dev", f.dev_ids.size()}, {"test", f.test_ids.size()}});
  }
  std::cout << summary.dump(2) << '\n';
  if (!out.empty()) write_json(out, summary);
  return 0;
}

struct RunArgs {
  fs::path plan;
  std::string split = "test";
  fs::path out = "runs.jsonl";
  fs::path failures;
  fs::path cache_dir;
  bool no_cache = false;
  std::optional<std::size_t> workers;
};

int cmd_run(const CorpusOptions& copt, const EndpointOptions& eopt, const RunArgs& a) {
  const auto c = copt.load();
  auto plan = a.plan.empty() ? experiment::ExperimentPlan::full() : experiment::load_plan(a.plan);
  plan.endpoint = eopt.apply(plan.endpoint);
  if (a.workers) plan.workers = *a.workers;
  if (!a.cache_dir.empty()) plan.cache_dir = a.cache_dir;
  plan.validate();
  const auto role = experiment::parse_split_role(a.split);

  std::shared_ptr<llm::ResponseCache> cache;
  if (!a.no_cache) cache = std::make_shared<llm::ResponseCache>(plan.cache_dir);
  llm::ClientGenerator generator(llm::ChatClient(plan.endpoint), cache);

  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  experiment::RecordWriter sink(a.out);
  experiment::GridOptions options;
  options.sink = &sink;
  const auto result = experiment::run_grid(plan, c, role, generator, options);

  if (!a.failures.empty()) experiment::save_failures(a.failures, result.failures);
  std::cout << result.records.size() << " records, " << result.failures.size() << " failures -> "
            << a.out.string() << '\n';
  return result.failures.empty() ? 0 : 3;
}

struct JudgeArgs {
  std::vector<fs::path> records;
  fs::path out = "judgments.jsonl";
  fs::path failures;
  std::string generator_model;
  fs::path cache_dir;
  std::size_t workers = 4;
};

int cmd_judge(const CorpusOptions& copt, const EndpointOptions& eopt, const JudgeArgs& a) {
  const auto c = copt.load();
  const auto records = load_all_records(a.records);
  const auto cfg = eopt.apply({});
  std::shared_ptr<llm::ResponseCache> cache;
  if (!a.cache_dir.empty()) cache = std::make_shared<llm::ResponseCache>(a.cache_dir);
  llm::ClientGenerator generator(llm::ChatClient(cfg), cache);

  const auto result = experiment::judge_records(records, c, generator, a.workers, a.generator_model);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  judge::save_judgments(a.out, result.judgments);
  if (!a.failures.empty()) experiment::save_failures(a.failures, result.failures);
  std::cout << result.judgments.size() << " judgments, " << result.failures.size() << " failures -> "
            << a.out.string() << '\n';
  return result.failures.empty() ? 0 : 3;
}

struct ReportArgs {
  std::vector<fs::path> records;
  std::vector<fs::path> judgments;
  std::vector<int> sets{1, 2, 3, 4, 5, 6, 7, 8};
  std::string format = "markdown";
  fs::path out = "report";
};

int cmd_report(const CorpusOptions& copt, const ReportArgs& a) {
  experiment::RangeMap ranges = corpus::asap_score_ranges();
  if (copt.given()) {
    for (const auto& [id, set] : copt.load().sets) ranges[id] = set.score_range;
  }
  auto records = load_all_records(a.records);
  const auto judgments = load_all_judgments(a.judgments);

  std::vector<report::Table> tables;
  if (!judgments.empty()) {
    using experiment::Facet;
    for (auto facet : {Facet::Pattern, Facet::InstructionType, Facet::ShotMode}) {
      const auto t = experiment::helpfulness_table(records, judgments, facet);
      tables.push_back(experiment::to_report_table(t, "helpfulness_by_" + std::string(to_string(facet))));
    }
  }

  const experiment::RecordStore store(std::move(records));
  using experiment::Aggregation;
  using experiment::Facet;
  const std::pair<Facet, Aggregation> layouts[] = {
      {Facet::Pattern, Aggregation::MeanOverInstructions},
      {Facet::Pattern, Aggregation::BestOnDev},
      {Facet::InstructionType, Aggregation::BestOnDev},
      {Facet::ShotMode, Aggregation::BestOnDev},
  };
  for (const auto& [facet, agg] : layouts) {
    if (agg == Aggregation::BestOnDev && store.view(experiment::SplitRole::Dev).empty()) {
      spdlog::warn("no dev records; skipping best-on-dev table by {}", to_string(facet));
      continue;
    }
    const auto t = experiment::score_table(store, facet, agg, ranges, a.sets);
    const std::string stem = std::string(agg == Aggregation::BestOnDev ? "qwk_best_on_dev_by_" : "qwk_mean_by_") +
                             std::string(to_string(facet));
    tables.push_back(experiment::to_report_table(t, stem));
  }

  print_written(report::emit_report(tables, report::parse_format(a.format), a.out));
  return 0;
}

struct CorrelateArgs {
  fs::path export_path;
  std::vector<fs::path> judgments;
  int statement = 5;
  std::string format = "markdown";
  fs::path out = "report";
};

int cmd_correlate(const CorrelateArgs& a) {
  const auto rows = annotation::load_export(a.export_path);
  const auto judgments = load_all_judgments(a.judgments);

  std::vector<report::Table> tables;
  const auto manual = annotation::manual_results_table(rows);
  tables.push_back(annotation::to_report_table(manual, "manual_results"));
  if (!judgments.empty()) {
    tables.push_back(annotation::to_report_table(annotation::correlate_manual_automatic(rows, judgments),
                                                 "manual_automatic_correlation"));
  }
  tables.push_back(annotation::to_report_table(annotation::group_alpha(rows, a.statement), a.statement,
                                               "annotator_agreement"));
  print_written(report::emit_report(tables, report::parse_format(a.format), a.out));
  return 0;
}

struct SampleArgs {
  std::vector<fs::path> records;
  std::vector<fs::path> judgments;
  std::vector<std::string> annotators;
  fs::path annotators_file;
  std::uint64_t seed = 0;
  std::size_t n = 24;
  int set_id = 4;
  std::size_t groups = 4;
  fs::path out = "bundle.json";
};

int cmd_sample(const CorpusOptions& copt, const SampleArgs& a) {
  const auto c = copt.load();
  const auto records = load_all_records(a.records);
  const auto judgments = load_all_judgments(a.judgments);

  annotation::SamplingOptions options;
  options.set_id = a.set_id;
  options.n = a.n;
  if (!judgments.empty()) {
    options.combinations = annotation::best_combinations(records, judgments, options.strategies);
    for (const auto& [type, s] : options.combinations) {
      spdlog::info("best combination for {}: {}", prompting::to_string(type), prompting::to_string(s));
    }
  }

  auto annotators = a.annotators;
  if (!a.annotators_file.empty()) {
    std::ifstream in(a.annotators_file);
    if (!in) throw FormatError("cannot open " + a.annotators_file.string());
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) annotators.push_back(line);
    }
  }

  SeededRng rng(a.seed);
  annotation::StudyBundle bundle;
  bundle.items = annotation::sample_annotation_items(records, c, options, rng);
  bundle.groups = annotation::make_groups(bundle.items, annotators, a.groups);
  bundle.validate();
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  annotation::save_bundle(a.out, bundle);
  std::cout << bundle.items.size() << " items, " << bundle.groups.size() << " groups -> " << a.out.string()
            << '\n';
  return 0;
}

struct ServeArgs {
  fs::path bundle;
  fs::path log = "annotations.log.jsonl";
  annotation::ServiceOptions service;
};

int cmd_serve(ServeArgs a) {
  if (a.service.admin_token.empty()) {
    if (const char* env = std::getenv("ESSAYFB_ADMIN_TOKEN")) a.service.admin_token = env;
  }
  annotation::AnnotationStore store(annotation::load_bundle(a.bundle), a.log);
  annotation::AnnotationServer server(store, a.service);
  std::cout << "annotation service on " << server.base_url() << std::endl;
  if (a.service.admin_token.empty()) spdlog::warn("no admin token; /api/export is open");
  serve_until_interrupted([&] { server.stop(); });
  return 0;
}

int cmd_mock(const CorpusOptions& copt, int port, std::uint64_t seed) {
  const auto c = copt.load();
  const llm::ScriptedModel model(c, seed);
  llm::MockEndpoint endpoint(model.responder(), port);
  std::cout << "scripted endpoint on " << endpoint.base_url() << std::endl;
  serve_until_interrupted([&] { endpoint.stop(); });
  spdlog::info("served {} requests", endpoint.calls());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-strategy experiments for LLM essay scoring and feedback"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  CorpusOptions corpus_opt;
  EndpointOptions endpoint_opt;

  fs::path ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print a summary");
  corpus_opt.add_to(*ingest);
  ingest->add_option("--out", ingest_out, "Also write the summary JSON here");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the prompt grid against an endpoint");
  corpus_opt.add_to(*run);
  endpoint_opt.add_to(*run);
  run->add_option("--plan", run_args.plan, "Experiment plan JSON (default: full grid)");
  run->add_option("--split", run_args.split, "test or dev")->check(CLI::IsMember({"test", "dev"}));
  run->add_option("--out", run_args.out, "Records JSONL");
  run->add_option("--failures", run_args.failures, "Failed runs JSONL");
  run->add_option("--cache", run_args.cache_dir, "Response cache directory (overrides the plan)");
  run->add_flag("--no-cache", run_args.no_cache, "Always call the endpoint");
  run->add_option("--workers", run_args.workers, "Concurrent requests");

  JudgeArgs judge_args;
  auto* judge_cmd = app.add_subcommand("judge", "Rate feedback helpfulness with a judge model");
  corpus_opt.add_to(*judge_cmd);
  endpoint_opt.add_to(*judge_cmd);
  judge_cmd->add_option("--records", judge_args.records, "Records JSONL")->required();
  judge_cmd->add_option("--out", judge_args.out, "Judgments JSONL");
  judge_cmd->add_option("--failures", judge_args.failures, "Failed judgments JSONL");
  judge_cmd->add_option("--generator-model", judge_args.generator_model,
                        "Model that wrote the feedback, to flag self-judging");
  judge_cmd->add_option("--cache", judge_args.cache_dir, "Response cache directory");
  judge_cmd->add_option("--workers", judge_args.workers, "Concurrent requests");

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Write QWK and helpfulness tables");
  corpus_opt.add_to(*report_cmd);
  report_cmd->add_option("--records", report_args.records, "Records JSONL (dev and test)")->required();
  report_cmd->add_option("--judgments", report_args.judgments, "Judgments JSONL");
  report_cmd->add_option("--set-ids", report_args.sets, "Set columns");
  report_cmd->add_option("--format", report_args.format, "plain, delimited or markdown");
  report_cmd->add_option("--out", report_args.out, "Output directory");

  CorrelateArgs corr_args;
  auto* corr = app.add_subcommand("correlate", "Manual results, manual-automatic correlation and agreement");
  corr->add_option("--export", corr_args.export_path, "Annotation export JSONL")->required();
  corr->add_option("--judgments", corr_args.judgments, "Judgments JSONL");
  corr->add_option("--statement", corr_args.statement, "Statement for agreement")->check(CLI::Range(1, 5));
  corr->add_option("--format", corr_args.format, "plain, delimited or markdown");
  corr->add_option("--out", corr_args.out, "Output directory");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample-annotation", "Draw the annotation study bundle");
  corpus_opt.add_to(*sample);
  sample->add_option("--records", sample_args.records, "Records JSONL")->required();
  sample->add_option("--judgments", sample_args.judgments, "Judgments, to restrict to best combinations");
  sample->add_option("--annotators", sample_args.annotators, "Annotator tokens");
  sample->add_option("--annotators-file", sample_args.annotators_file, "One annotator token per line");
  sample->add_option("--seed", sample_args.seed, "Sampling seed");
  sample->add_option("-n,--items", sample_args.n, "Number of items");
  sample->add_option("--set", sample_args.set_id, "Essay set");
  sample->add_option("--groups", sample_args.groups, "Annotator groups");
  sample->add_option("--out", sample_args.out, "Bundle JSON");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("annotate-serve", "Serve the annotation API");
  serve->add_option("--bundle", serve_args.bundle, "Bundle JSON")->required();
  serve->add_option("--log", serve_args.log, "Append-only submission log");
  serve->add_option("--host", serve_args.service.host, "Bind address");
  serve->add_option("--port", serve_args.service.port, "Port (0 picks one)");
  serve->add_option("--admin-token", serve_args.service.admin_token,
                    "Token for /api/export (default: $ESSAYFB_ADMIN_TOKEN)");
  serve->add_option("--static", serve_args.service.static_dir, "Directory served at /");

  int mock_port = 8765;
  std::uint64_t mock_seed = 0;
  auto* mock = app.add_subcommand("mock-endpoint", "Offline scripted chat endpoint over a corpus");
  corpus_opt.add_to(*mock);
  mock->add_option("--port", mock_port, "Port");
  mock->add_option("--seed", mock_seed, "Script seed");

  CLI11_PARSE(app, argc, argv);
  // stdout carries results (paths, summaries); logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("essayfb"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*ingest) return cmd_ingest(corpus_opt, ingest_out);
    if (*run) return cmd_run(corpus_opt, endpoint_opt, run_args);
    if (*judge_cmd) return cmd_judge(corpus_opt, endpoint_opt, judge_args);
    if (*report_cmd) return cmd_report(corpus_opt, report_args);
    if (*corr) return cmd_correlate(corr_args);
    if (*sample) return cmd_sample(corpus_opt, sample_args);
    if (*serve) return cmd_serve(serve_args);
    if (*mock) return cmd_mock(corpus_opt, mock_port, mock_seed);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("unexpected: {}", e.what());
    return 2;
  }
  return 0;
}
