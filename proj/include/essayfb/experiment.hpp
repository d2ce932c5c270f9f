#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "essayfb/corpus.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/llm_client.hpp"
#include "essayfb/prompting.hpp"
#include "essayfb/records.hpp"
#include "essayfb/report.hpp"

namespace essayfb::experiment {

struct ExperimentPlan {
  std::vector<prompting::PatternKind> patterns;
  std::vector<prompting::InstructionType> instruction_types;
  std::vector<int> paraphrases;
  std::vector<prompting::ShotMode> shot_modes;
  std::vector<int> sets;
  std::vector<int> folds;
  llm::EndpointConfig endpoint;
  std::uint64_t seed = 0;
  std::size_t few_shot_budget = prompting::kDefaultFewShotBudget;
  std::size_t workers = 4;
  std::filesystem::path cache_dir = "cache";

  /// Every pattern, type, paraphrase, shot mode, set and fold.
  static ExperimentPlan full();
  void validate() const;
  std::vector<prompting::Strategy> strategies() const;
};

/// Missing keys fall back to ExperimentPlan::full().
ExperimentPlan plan_from_json(const nlohmann::json& doc);
ExperimentPlan load_plan(const std::filesystem::path& path);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

struct GridResult {
  std::vector<RunRecord> records;
  std::vector<RunFailure> failures;
};

struct GridOptions {
  RecordWriter* sink = nullptr;  // receives records and failures as they complete
  const prompting::TemplateLibrary* library = nullptr;
};

/// Essays of `role` in the plan's folds and sets, in fold then id order.
std::vector<std::pair<int, const corpus::Essay*>> plan_essays(const ExperimentPlan& plan,
                                                              const corpus::Corpus& corpus,
                                                              SplitRole role);

/// One record per (strategy, essay) on the chosen split. Failed runs are
/// reported in `failures` and the grid carries on. Output order is the task
/// order (strategy-major), independent of worker scheduling.
GridResult run_grid(const ExperimentPlan& plan, const corpus::Corpus& corpus, SplitRole role,
                    llm::Generator& generator, const GridOptions& options = {});

enum class Facet { Pattern, InstructionType, ShotMode };
enum class Aggregation { MeanOverInstructions, BestOnDev };

std::string_view to_string(Facet facet);
Facet parse_facet(std::string_view name);

struct ResultsRow {
  std::string label;
  std::map<int, std::optional<double>> per_set;
  std::optional<double> mean;
  std::size_t scored = 0;
  std::size_t unscored = 0;
  bool available = false;
  std::optional<prompting::Strategy> chosen;  // best-on-dev only
};

struct ResultsTable {
  std::string title;
  Facet facet = Facet::Pattern;
  std::vector<int> sets;
  std::vector<ResultsRow> rows;
};

using RangeMap = std::map<int, corpus::ScoreRange>;

/// QWK of one group of records against gold; nullopt with fewer than two
/// scored records. Unscored records are dropped before the metric runs.
std::optional<double> records_qwk(std::span<const RunRecord* const> records, const corpus::ScoreRange& range);

/// Picks the strategy with the highest mean per-set dev QWK among the dev
/// records accepted by `row`. Reads only the dev view of the store.
prompting::Strategy select_best_on_dev(const RecordStore& store,
                                       const std::function<bool(const prompting::Strategy&)>& row,
                                       const RangeMap& ranges);

/// Score table over the test view (plus the dev view for BestOnDev).
ResultsTable score_table(const RecordStore& store, Facet facet, Aggregation aggregation,
                         const RangeMap& ranges, std::vector<int> sets = {1, 2, 3, 4, 5, 6, 7, 8});

report::Table to_report_table(const ResultsTable& table, std::string name);

struct HelpfulnessCell {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct HelpfulnessRow {
  std::string label;
  std::map<std::string, std::optional<HelpfulnessCell>> by_model;
};

struct HelpfulnessTable {
  std::string title;
  Facet facet = Facet::Pattern;
  std::vector<std::string> judge_models;
  std::vector<HelpfulnessRow> rows;
};

struct JudgeResult {
  std::vector<judge::HelpfulnessJudgment> judgments;
  std::vector<RunFailure> failures;  // error_kind "judgment", "endpoint", ...
};

/// Judges the feedback of every record that has some, over `workers`
/// threads. Output keeps record order.
JudgeResult judge_records(std::span<const RunRecord> records, const corpus::Corpus& corpus,
                          llm::Generator& generator, std::size_t workers = 4,
                          std::string_view generator_model = {});

/// Mean helpfulness per facet row and judge model. Each strategy is first
/// averaged over its judged items; the cell reports mean and population std
/// over those strategy means, n counts judgments.
HelpfulnessTable helpfulness_table(std::span<const RunRecord> records,
                                   std::span<const judge::HelpfulnessJudgment> judgments, Facet facet);

report::Table to_report_table(const HelpfulnessTable& table, std::string name);

}  // namespace essayfb::experiment
