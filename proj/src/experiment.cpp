#include "essayfb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "essayfb/errors.hpp"
#include "essayfb/extraction.hpp"
#include "essayfb/metrics.hpp"
#include "essayfb/random.hpp"
#include "essayfb/text.hpp"

namespace essayfb::experiment {

using nlohmann::json;
using prompting::Strategy;

ExperimentPlan ExperimentPlan::full() {
  ExperimentPlan plan;
  plan.patterns.assign(prompting::kAllPatterns.begin(), prompting::kAllPatterns.end());
  plan.instruction_types.assign(prompting::kAllInstructionTypes.begin(),
                                prompting::kAllInstructionTypes.end());
  plan.paraphrases = {1, 2, 3, 4};
  plan.shot_modes.assign(prompting::kAllShotModes.begin(), prompting::kAllShotModes.end());
  plan.sets = {1, 2, 3, 4, 5, 6, 7, 8};
  plan.folds = {0, 1, 2, 3, 4};
  return plan;
}

void ExperimentPlan::validate() const {
  auto require = [](bool non_empty, const char* what) {
    if (!non_empty) throw ValidationError(std::string("experiment plan: ") + what + " is empty");
  };
  require(!patterns.empty(), "patterns");
  require(!instruction_types.empty(), "instruction_types");
  require(!paraphrases.empty(), "paraphrases");
  require(!shot_modes.empty(), "shot_modes");
  require(!sets.empty(), "sets");
  require(!folds.empty(), "folds");
  for (int p : paraphrases) {
    if (p < 1 || p > prompting::kParaphrasesPerType) {
      throw ValidationError("experiment plan: paraphrase " + std::to_string(p) + " outside 1-4");
    }
  }
  for (int s : sets) {
    if (s < 1 || s > 8) throw ValidationError("experiment plan: set " + std::to_string(s) + " outside 1-8");
  }
  for (int f : folds) {
    if (f < 0 || f >= corpus::kNumFolds) {
      throw ValidationError("experiment plan: fold " + std::to_string(f) + " outside 0-4");
    }
  }
  if (workers == 0) throw ValidationError("experiment plan: workers must be positive");
  if (few_shot_budget == 0) throw ValidationError("experiment plan: few_shot_budget must be positive");
  endpoint.validate();
}

std::vector<Strategy> ExperimentPlan::strategies() const {
  return prompting::enumerate_strategies(patterns, instruction_types, paraphrases, shot_modes);
}

ExperimentPlan plan_from_json(const json& doc) {
  auto plan = ExperimentPlan::full();
  try {
    if (doc.contains("patterns")) {
      plan.patterns.clear();
      for (const auto& p : doc["patterns"]) plan.patterns.push_back(prompting::parse_pattern(p.get<std::string>()));
    }
    if (doc.contains("instruction_types")) {
      plan.instruction_types.clear();
      for (const auto& t : doc["instruction_types"]) {
        plan.instruction_types.push_back(prompting::parse_instruction_type(t.get<std::string>()));
      }
    }
    if (doc.contains("shot_modes")) {
      plan.shot_modes.clear();
      for (const auto& s : doc["shot_modes"]) plan.shot_modes.push_back(prompting::parse_shot_mode(s.get<std::string>()));
    }
    if (doc.contains("paraphrases")) plan.paraphrases = doc["paraphrases"].get<std::vector<int>>();
    if (doc.contains("sets")) plan.sets = doc["sets"].get<std::vector<int>>();
    if (doc.contains("folds")) plan.folds = doc["folds"].get<std::vector<int>>();
    if (doc.contains("endpoint")) plan.endpoint = llm::endpoint_from_json(doc["endpoint"]);
    plan.seed = doc.value("seed", plan.seed);
    plan.few_shot_budget = doc.value("few_shot_budget", plan.few_shot_budget);
    plan.workers = doc.value("workers", plan.workers);
    if (doc.contains("cache_dir")) plan.cache_dir = doc["cache_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("experiment plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  auto plan = plan_from_json(doc);
  if (plan.cache_dir.is_relative()) plan.cache_dir = path.parent_path() / plan.cache_dir;
  return plan;
}

json plan_to_json(const ExperimentPlan& plan) {
  json doc;
  for (auto p : plan.patterns) doc["patterns"].push_back(prompting::to_string(p));
  for (auto t : plan.instruction_types) doc["instruction_types"].push_back(prompting::to_string(t));
  for (auto s : plan.shot_modes) doc["shot_modes"].push_back(prompting::to_string(s));
  doc["paraphrases"] = plan.paraphrases;
  doc["sets"] = plan.sets;
  doc["folds"] = plan.folds;
  doc["endpoint"] = llm::endpoint_to_json(plan.endpoint);
  doc["seed"] = plan.seed;
  doc["few_shot_budget"] = plan.few_shot_budget;
  doc["workers"] = plan.workers;
  doc["cache_dir"] = plan.cache_dir.string();
  return doc;
}

std::vector<std::pair<int, const corpus::Essay*>> plan_essays(const ExperimentPlan& plan,
                                                              const corpus::Corpus& corpus,
                                                              SplitRole role) {
  std::vector<std::pair<int, const corpus::Essay*>> out;
  for (int fold : plan.folds) {
    auto it = std::find_if(corpus.folds.begin(), corpus.folds.end(),
                           [&](const corpus::FoldSplit& f) { return f.fold_index == fold; });
    if (it == corpus.folds.end()) throw ValidationError("corpus has no fold " + std::to_string(fold));
    const auto& ids = role == SplitRole::Dev ? it->dev_ids : it->test_ids;
    for (auto id : ids) {
      const auto& essay = corpus.essay(id);
      if (std::find(plan.sets.begin(), plan.sets.end(), essay.set_id) != plan.sets.end()) {
        out.emplace_back(fold, &essay);
      }
    }
  }
  return out;
}

GridResult run_grid(const ExperimentPlan& plan, const corpus::Corpus& corpus, SplitRole role,
                    llm::Generator& generator, const GridOptions& options) {
  plan.validate();
  const auto strategies = plan.strategies();
  const auto essays = plan_essays(plan, corpus, role);
  const std::size_t total = strategies.size() * essays.size();
  spdlog::info("running {} strategies x {} {} essays = {} runs", strategies.size(), essays.size(),
               to_string(role), total);

  std::vector<std::optional<RunRecord>> records(total);
  std::vector<std::optional<RunFailure>> failures(total);
  std::atomic<std::size_t> next{0};
  prompting::AssemblyOptions assembly{plan.few_shot_budget, options.library};

  auto run_one = [&](std::size_t task) {
    const auto& strategy = strategies[task / essays.size()];
    const auto& [fold, essay] = essays[task % essays.size()];
    const auto run_id = make_run_id(strategy, essay->set_id, fold, role, essay->essay_id);
    try {
      const auto& set = corpus.set(essay->set_id);
      SeededRng rng(mix_seed(plan.seed, static_cast<std::uint64_t>(essay->set_id),
                             static_cast<std::uint64_t>(essay->essay_id)));
      const auto prompt = prompting::assemble(strategy, set, *essay, rng, assembly);
      const auto response = generator.generate_text(prompt.text);

      RunRecord r;
      r.strategy = strategy;
      r.set_id = essay->set_id;
      r.fold = fold;
      r.split = role;
      r.essay_id = essay->essay_id;
      r.gold_score = essay->gold_score;
      r.prompt_digest = text::sha256_hex(prompt.text);
      r.prompt_chars = prompt.meta.character_count;
      r.exemplars = prompt.meta.exemplar_indices;
      r.over_budget = prompt.meta.over_budget;
      r.response = response.text;
      r.latency_ms = response.latency_ms;
      r.cached = response.cached;
      if (prompting::asks_for_score(strategy.instruction)) {
        r.extraction = extraction::extract_with_reprompt(
            response.text, set.score_range,
            [&](const std::string& reprompt) { return generator.generate_text(reprompt).text; });
      }
      r.feedback = extraction::split_feedback(response.text, r.extraction, run_id);
      if (options.sink) options.sink->append(r);
      records[task] = std::move(r);
    } catch (const ContentError& e) {
      failures[task] = RunFailure{run_id, "content", e.what()};
    } catch (const ConfigurationError& e) {
      failures[task] = RunFailure{run_id, "configuration", e.what()};
    } catch (const EndpointError& e) {
      failures[task] = RunFailure{run_id, "endpoint", e.what()};
    } catch (const Error& e) {
      failures[task] = RunFailure{run_id, "assembly", e.what()};
    }
    if (failures[task]) {
      spdlog::error("run {} failed: {}", run_id, failures[task]->message);
      if (options.sink) options.sink->append(*failures[task]);
    }
  };

  const auto worker_count = std::max<std::size_t>(1, std::min(plan.workers, total));
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t task = next++; task < total; task = next++) run_one(task);
    });
  }
  for (auto& t : workers) t.join();

  GridResult result;
  result.records.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (records[i]) result.records.push_back(std::move(*records[i]));
    if (failures[i]) result.failures.push_back(std::move(*failures[i]));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Score tables

namespace {

constexpr std::array<std::string_view, 3> kFacetNames{"pattern", "instruction_type", "shot_mode"};

int facet_value(const Strategy& s, Facet facet) {
  switch (facet) {
    case Facet::Pattern:
      return static_cast<int>(s.pattern);
    case Facet::InstructionType:
      return static_cast<int>(s.instruction);
    case Facet::ShotMode:
      return static_cast<int>(s.shot);
  }
  return 0;
}

std::string facet_label(Facet facet, int value) {
  switch (facet) {
    case Facet::Pattern:
      return std::string(prompting::display_name(static_cast<prompting::PatternKind>(value)));
    case Facet::InstructionType:
      return std::string(prompting::display_name(static_cast<prompting::InstructionType>(value)));
    case Facet::ShotMode:
      return std::string(prompting::display_name(static_cast<prompting::ShotMode>(value)));
  }
  return {};
}

const corpus::ScoreRange& range_for(const RangeMap& ranges, int set_id) {
  if (auto it = ranges.find(set_id); it != ranges.end()) return it->second;
  if (auto it = corpus::asap_score_ranges().find(set_id); it != corpus::asap_score_ranges().end()) {
    return it->second;
  }
  throw ValidationError("no score range for set " + std::to_string(set_id));
}

using RecordGroup = std::vector<const RunRecord*>;

// Per-set QWK cells for one group of records plus their mean.
void fill_cells(const RecordGroup& group, const std::vector<int>& sets, const RangeMap& ranges,
                ResultsRow& row) {
  std::map<int, RecordGroup> by_set;
  for (const auto* r : group) by_set[r->set_id].push_back(r);
  std::vector<double> present;
  for (int set : sets) {
    auto it = by_set.find(set);
    std::optional<double> cell;
    if (it != by_set.end()) cell = records_qwk(it->second, range_for(ranges, set));
    row.per_set[set] = cell;
    if (cell) present.push_back(*cell);
  }
  if (!present.empty()) row.mean = metrics::mean_std(present).mean;
}

std::optional<double> mean_dev_qwk(const RecordGroup& group, const RangeMap& ranges) {
  ResultsRow scratch;
  std::set<int> sets;
  for (const auto* r : group) sets.insert(r->set_id);
  fill_cells(group, {sets.begin(), sets.end()}, ranges, scratch);
  return scratch.mean;
}

}  // namespace

std::string_view to_string(Facet facet) { return kFacetNames[static_cast<int>(facet)]; }

Facet parse_facet(std::string_view name) {
  for (std::size_t i = 0; i < kFacetNames.size(); ++i) {
    if (kFacetNames[i] == name) return static_cast<Facet>(i);
  }
  throw ValidationError("unknown facet '" + std::string(name) + "'");
}

std::optional<double> records_qwk(std::span<const RunRecord* const> records, const corpus::ScoreRange& range) {
  metrics::RatingVector gold{{}, range.min, range.max};
  metrics::RatingVector predicted{{}, range.min, range.max};
  for (const auto* r : records) {
    if (!r->extraction.scored()) continue;
    gold.values.push_back(r->gold_score);
    predicted.values.push_back(*r->extraction.score);
  }
  if (gold.values.size() < 2) return std::nullopt;
  return metrics::qwk(gold, predicted);
}

Strategy select_best_on_dev(const RecordStore& store, const std::function<bool(const Strategy&)>& row,
                            const RangeMap& ranges) {
  std::map<Strategy, RecordGroup> candidates;
  for (const auto& r : store.view(SplitRole::Dev)) {
    if (r.split != SplitRole::Dev) throw Error("dev view handed out a " + std::string(to_string(r.split)) + " record");
    if (row(r.strategy)) candidates[r.strategy].push_back(&r);
  }
  if (candidates.empty()) throw ValidationError("no dev records for this row");

  std::optional<Strategy> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [strategy, group] : candidates) {  // map order is the tie-break order
    const auto score = mean_dev_qwk(group, ranges);
    if (score && *score > best_score) {
      best = strategy;
      best_score = *score;
    }
  }
  if (!best) throw ValidationError("no dev candidate in this row has a computable QWK");
  return *best;
}

ResultsTable score_table(const RecordStore& store, Facet facet, Aggregation aggregation,
                         const RangeMap& ranges, std::vector<int> sets) {
  ResultsTable table;
  table.facet = facet;
  table.sets = sets;

  std::map<int, RecordGroup> rows;
  for (const auto& r : store.view(SplitRole::Test)) rows[facet_value(r.strategy, facet)].push_back(&r);

  for (const auto& [value, records] : rows) {
    ResultsRow row;
    row.label = facet_label(facet, value);

    if (aggregation == Aggregation::MeanOverInstructions) {
      table.title = "Average QWK per " + std::string(to_string(facet));
      std::map<Strategy, RecordGroup> by_strategy;
      for (const auto* r : records) by_strategy[r->strategy].push_back(r);
      std::map<int, std::vector<double>> cell_values;
      for (const auto& [strategy, group] : by_strategy) {
        ResultsRow partial;
        fill_cells(group, sets, ranges, partial);
        for (const auto& [set, cell] : partial.per_set) {
          if (cell) cell_values[set].push_back(*cell);
        }
      }
      std::vector<double> present;
      for (int set : sets) {
        std::optional<double> cell;
        if (auto it = cell_values.find(set); it != cell_values.end()) cell = metrics::mean_std(it->second).mean;
        row.per_set[set] = cell;
        if (cell) present.push_back(*cell);
      }
      if (!present.empty()) row.mean = metrics::mean_std(present).mean;
      for (const auto* r : records) (r->extraction.scored() ? row.scored : row.unscored) += 1;
    } else {
      table.title = "QWK of the best dev variation per " + std::string(to_string(facet));
      try {
        const auto chosen = select_best_on_dev(
            store, [&](const Strategy& s) { return facet_value(s, facet) == value; }, ranges);
        row.chosen = chosen;
        RecordGroup group;
        for (const auto* r : records) {
          if (r->strategy == chosen) group.push_back(r);
        }
        fill_cells(group, sets, ranges, row);
        for (const auto* r : group) (r->extraction.scored() ? row.scored : row.unscored) += 1;
      } catch (const ValidationError& e) {
        spdlog::warn("row {} unavailable: {}", row.label, e.what());
        for (int set : sets) row.per_set[set] = std::nullopt;
        for (const auto* r : records) (r->extraction.scored() ? row.scored : row.unscored) += 1;
      }
    }
    row.available = row.scored > 0 && row.mean.has_value();
    table.rows.push_back(std::move(row));
  }
  return table;
}

report::Table to_report_table(const ResultsTable& table, std::string name) {
  report::Table out;
  out.name = std::move(name);
  out.title = table.title;
  out.columns.push_back(table.facet == Facet::Pattern            ? "Pattern"
                        : table.facet == Facet::InstructionType ? "Task Instruction Type"
                                                                : "Context");
  for (int set : table.sets) out.columns.push_back(std::to_string(set));
  out.columns.push_back("Mean");
  out.columns.push_back("Unscored");
  for (const auto& row : table.rows) {
    std::vector<report::Cell> cells;
    cells.emplace_back(row.label);
    for (int set : table.sets) {
      auto it = row.per_set.find(set);
      if (row.available && it != row.per_set.end() && it->second) {
        cells.emplace_back(*it->second);
      } else {
        cells.emplace_back(std::monostate{});
      }
    }
    if (row.available && row.mean) {
      cells.emplace_back(*row.mean);
    } else {
      cells.emplace_back(std::monostate{});
    }
    cells.emplace_back(static_cast<long long>(row.unscored));
    out.rows.push_back(std::move(cells));
  }
  return out;
}

JudgeResult judge_records(std::span<const RunRecord> records, const corpus::Corpus& corpus,
                          llm::Generator& generator, std::size_t workers, std::string_view generator_model) {
  std::vector<const RunRecord*> todo;
  for (const auto& r : records) {
    if (!r.feedback.empty) todo.push_back(&r);
  }
  spdlog::info("judging {} feedback texts with {}", todo.size(), generator.model_name());
  std::vector<std::optional<judge::HelpfulnessJudgment>> judged(todo.size());
  std::vector<std::optional<RunFailure>> failures(todo.size());
  std::atomic<std::size_t> next{0};

  auto judge_one = [&](std::size_t i) {
    const auto& r = *todo[i];
    const auto run_id = r.run_id();
    try {
      judged[i] = judge::judge(corpus.essay(r.essay_id).text, r.feedback.text, generator, run_id, generator_model);
    } catch (const JudgmentError& e) {
      failures[i] = RunFailure{run_id, "judgment", e.what()};
    } catch (const ContentError& e) {
      failures[i] = RunFailure{run_id, "content", e.what()};
    } catch (const ConfigurationError& e) {
      failures[i] = RunFailure{run_id, "configuration", e.what()};
    } catch (const EndpointError& e) {
      failures[i] = RunFailure{run_id, "endpoint", e.what()};
    } catch (const Error& e) {
      failures[i] = RunFailure{run_id, "input", e.what()};
    }
    if (failures[i]) spdlog::error("judging {} failed: {}", run_id, failures[i]->message);
  };

  const auto worker_count = std::max<std::size_t>(1, std::min(workers, todo.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < worker_count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < todo.size(); i = next++) judge_one(i);
    });
  }
  for (auto& t : pool) t.join();

  JudgeResult out;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (judged[i]) out.judgments.push_back(std::move(*judged[i]));
    if (failures[i]) out.failures.push_back(std::move(*failures[i]));
  }
  return out;
}

HelpfulnessTable helpfulness_table(std::span<const RunRecord> records,
                                   std::span<const judge::HelpfulnessJudgment> judgments, Facet facet) {
  std::map<std::string, const RunRecord*> by_run;
  for (const auto& r : records) by_run.emplace(r.run_id(), &r);

  // facet value -> model -> strategy -> scores
  std::map<int, std::map<std::string, std::map<Strategy, std::vector<double>>>> grouped;
  std::set<std::string> models;
  for (const auto& j : judgments) {
    auto it = by_run.find(j.item);
    if (it == by_run.end()) continue;
    if (j.score < judge::kMinHelpfulness || j.score > judge::kMaxHelpfulness) {
      spdlog::warn("ignoring out-of-range helpfulness {} for {}", j.score, j.item);
      continue;
    }
    models.insert(j.judge_model);
    grouped[facet_value(it->second->strategy, facet)][j.judge_model][it->second->strategy].push_back(j.score);
  }

  HelpfulnessTable table;
  table.facet = facet;
  table.title = "Average helpfulness per " + std::string(to_string(facet));
  table.judge_models.assign(models.begin(), models.end());
  for (const auto& [value, per_model] : grouped) {
    HelpfulnessRow row;
    row.label = facet_label(facet, value);
    for (const auto& model : table.judge_models) {
      auto it = per_model.find(model);
      if (it == per_model.end()) {
        row.by_model[model] = std::nullopt;
        continue;
      }
      std::vector<double> strategy_means;
      std::size_t n = 0;
      for (const auto& [strategy, scores] : it->second) {
        strategy_means.push_back(metrics::mean_std(scores).mean);
        n += scores.size();
      }
      const auto ms = metrics::mean_std(strategy_means);
      row.by_model[model] = HelpfulnessCell{ms.mean, ms.std, n};
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

report::Table to_report_table(const HelpfulnessTable& table, std::string name) {
  report::Table out;
  out.name = std::move(name);
  out.title = table.title;
  out.precision = 2;
  out.columns.push_back(table.facet == Facet::Pattern            ? "Prompt Pattern"
                        : table.facet == Facet::InstructionType ? "Task Instruction Type"
                                                                : "In-Context Learning");
  for (const auto& m : table.judge_models) out.columns.push_back(m);
  for (const auto& row : table.rows) {
    std::vector<report::Cell> cells;
    cells.emplace_back(row.label);
    for (const auto& m : table.judge_models) {
      auto it = row.by_model.find(m);
      if (it != row.by_model.end() && it->second) {
        cells.emplace_back(report::MeanStdCell{it->second->mean, it->second->std});
      } else {
        cells.emplace_back(std::monostate{});
      }
    }
    out.rows.push_back(std::move(cells));
  }
  return out;
}

}  // namespace essayfb::experiment
