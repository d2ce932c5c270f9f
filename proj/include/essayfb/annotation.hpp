#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "essayfb/corpus.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/prompting.hpp"
#include "essayfb/random.hpp"
#include "essayfb/records.hpp"
#include "essayfb/report.hpp"

namespace essayfb::annotation {

inline constexpr int kNumStatements = 5;
inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 7;

inline constexpr std::array<std::string_view, kNumStatements> kStatements{
    "The feedback clearly points out mistakes that were made in the essay.",
    "The feedback explains exactly why the errors are errors.",
    "The feedback is very clear and precise so that the student can understand it.",
    "The feedback is absolutely suitable for students from 7th to 10th grade.",
    "Overall, the feedback is very helpful.",
};
inline constexpr std::string_view kScaleMinLabel = "I strongly disagree";
inline constexpr std::string_view kScaleMaxLabel = "I fully agree";

inline constexpr std::array kStudyStrategies{prompting::InstructionType::Feedback,
                                             prompting::InstructionType::FeedbackThenScoring,
                                             prompting::InstructionType::FeedbackDetailedCoTThenScoring};

struct AnnotationItem {
  std::string item_id;
  std::string essay_prompt;
  std::string essay;
  std::string feedback;
  prompting::InstructionType source_strategy = prompting::InstructionType::Feedback;
  std::string source_run;
  int set_id = 0;
  corpus::EssayId essay_id = 0;
};

struct AnnotatorGroup {
  int group_id = 0;
  std::vector<std::string> annotator_ids;
  std::vector<std::string> item_ids;
};

struct AnnotationRecord {
  std::string annotator_id;
  std::string item_id;
  std::array<int, kNumStatements> s{};
  std::string submitted_at;

  /// Throws ValidationError when any statement is outside 1-7.
  void validate() const;
};

/// One exported judgment joined with the hidden item metadata.
struct ExportRow {
  AnnotationRecord record;
  prompting::InstructionType strategy = prompting::InstructionType::Feedback;
  std::string source_run;
  int group_id = 0;
};

struct StudyBundle {
  std::vector<AnnotationItem> items;
  std::vector<AnnotatorGroup> groups;

  const AnnotationItem* find_item(std::string_view item_id) const;
  const AnnotatorGroup* group_of(std::string_view annotator_id) const;
  void validate() const;
};

nlohmann::json to_json(const AnnotationItem& item);
AnnotationItem item_from_json(const nlohmann::json& doc);
/// What an annotator gets to see: no strategy, no run id, no scores.
nlohmann::json annotator_view(const AnnotationItem& item);
nlohmann::json to_json(const AnnotationRecord& record);
AnnotationRecord annotation_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExportRow& row);
ExportRow export_row_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StudyBundle& bundle);
StudyBundle bundle_from_json(const nlohmann::json& doc);
StudyBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const std::filesystem::path& path, const StudyBundle& bundle);

std::vector<ExportRow> load_export(const std::filesystem::path& path);
void save_export(const std::filesystem::path& path, std::span<const ExportRow> rows);

// ---------------------------------------------------------------------------
// Sampling and group assignment

/// Per instruction type, the strategy whose feedback the judge rated most
/// helpful on average. Ties go to the smaller strategy.
std::map<prompting::InstructionType, prompting::Strategy> best_combinations(
    std::span<const experiment::RunRecord> records, std::span<const judge::HelpfulnessJudgment> judgments,
    std::span<const prompting::InstructionType> types);

struct SamplingOptions {
  int set_id = 4;
  std::size_t n = 24;
  std::vector<prompting::InstructionType> strategies{kStudyStrategies.begin(), kStudyStrategies.end()};
  // When set, only records of the mapped strategy count for that type.
  std::map<prompting::InstructionType, prompting::Strategy> combinations;
};

/// Draws n / |strategies| feedbacks per strategy (remainder to the earlier
/// strategies) from the test records of the chosen set. Items come back
/// interleaved by stratum, so with an even split any contiguous block of
/// |strategies| * k items holds k of each.
std::vector<AnnotationItem> sample_annotation_items(std::span<const experiment::RunRecord> records,
                                                    const corpus::Corpus& corpus, const SamplingOptions& options,
                                                    SeededRng& rng);

/// Splits items into contiguous blocks, one per group, and annotators into
/// groups of equal size in the given order.
std::vector<AnnotatorGroup> make_groups(std::span<const AnnotationItem> items,
                                        std::span<const std::string> annotator_ids, std::size_t num_groups = 4);

// ---------------------------------------------------------------------------
// Collection

struct Progress {
  std::size_t completed = 0;
  std::size_t total = 0;
};

/// Thread-safe judgment store. With a log path, every accepted submission is
/// appended to a JSONL audit log that is replayed on construction.
class AnnotationStore {
 public:
  explicit AnnotationStore(StudyBundle bundle, std::filesystem::path log_path = {});

  const StudyBundle& bundle() const { return bundle_; }

  /// NotFoundError for an unknown annotator; ValidationError for an item
  /// outside the annotator's group or a Likert value outside 1-7.
  AnnotationRecord submit(AnnotationRecord record);

  std::vector<const AnnotationItem*> items_for(std::string_view annotator_id) const;
  Progress progress(std::string_view annotator_id) const;
  std::optional<AnnotationRecord> current(std::string_view annotator_id, std::string_view item_id) const;
  /// Every accepted version for one (annotator, item), oldest first.
  std::vector<AnnotationRecord> history(std::string_view annotator_id, std::string_view item_id) const;
  /// Latest record per (annotator, item), sorted by annotator then item.
  std::vector<ExportRow> export_rows() const;

 private:
  void check(const AnnotationRecord& record) const;
  void apply(const AnnotationRecord& record);

  StudyBundle bundle_;
  std::filesystem::path log_path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, std::vector<AnnotationRecord>> versions_;
};

// ---------------------------------------------------------------------------
// Analysis

struct ManualRow {
  prompting::InstructionType strategy = prompting::InstructionType::Feedback;
  std::array<double, kNumStatements> mean{};
  std::size_t n = 0;
};

/// Mean of each statement per strategy over all annotators and items.
std::vector<ManualRow> manual_results_table(std::span<const ExportRow> rows);

struct CorrelationTable {
  std::vector<std::string> judge_models;
  std::map<std::string, std::array<std::optional<double>, kNumStatements>> cells;  // nullopt: undefined
  std::size_t items = 0;
};

/// Pearson over items between the mean manual score per statement and the
/// automatic helpfulness score, per judge model. Judgments are matched to
/// items by run id; several judgments of one model for a run are averaged.
CorrelationTable correlate_manual_automatic(std::span<const ExportRow> rows,
                                            std::span<const judge::HelpfulnessJudgment> judgments);

struct GroupAlpha {
  std::vector<std::pair<int, double>> per_group;
  double mean = 0.0;
};

/// Interval alpha per group over one statement (1-based, S5 by default),
/// then the arithmetic mean over groups. Groups with fewer than two
/// annotators are skipped with a warning.
GroupAlpha group_alpha(std::span<const ExportRow> rows, int statement = 5);

report::Table to_report_table(std::span<const ManualRow> rows, std::string name);
report::Table to_report_table(const CorrelationTable& table, std::string name);
report::Table to_report_table(const GroupAlpha& alpha, int statement, std::string name);

}  // namespace essayfb::annotation
