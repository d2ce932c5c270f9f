#pragma once

#include <array>
#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "essayfb/corpus.hpp"
#include "essayfb/random.hpp"

namespace essayfb::prompting {

enum class PatternKind { Base, TeachersAssistant, EducationalResearcher, CreativeWritingMentor };

enum class InstructionType {
  Scoring,
  Feedback,
  ScoringThenFeedback,
  FeedbackThenScoring,
  ScoringThenFeedbackCoT,
  FeedbackDetailedCoTThenScoring,
  ScoringThenExplanation,
  ExplanationThenScoring,
};

enum class ShotMode { Zero, One, Few };

inline constexpr std::array kAllPatterns{PatternKind::Base, PatternKind::TeachersAssistant,
                                         PatternKind::EducationalResearcher,
                                         PatternKind::CreativeWritingMentor};
inline constexpr std::array kAllInstructionTypes{
    InstructionType::Scoring,
    InstructionType::Feedback,
    InstructionType::ScoringThenFeedback,
    InstructionType::FeedbackThenScoring,
    InstructionType::ScoringThenFeedbackCoT,
    InstructionType::FeedbackDetailedCoTThenScoring,
    InstructionType::ScoringThenExplanation,
    InstructionType::ExplanationThenScoring,
};
inline constexpr std::array kAllShotModes{ShotMode::Zero, ShotMode::One, ShotMode::Few};
inline constexpr int kParaphrasesPerType = 4;
inline constexpr std::size_t kDefaultFewShotBudget = 5120;

std::string_view to_string(PatternKind kind);
std::string_view to_string(InstructionType type);
std::string_view to_string(ShotMode mode);
/// Short labels for report rows ("TA", "Feedback->Scoring", ...).
std::string_view display_name(PatternKind kind);
std::string_view display_name(InstructionType type);
std::string_view display_name(ShotMode mode);

// Parsers accept the identifiers produced by to_string. Throw ValidationError.
PatternKind parse_pattern(std::string_view name);
InstructionType parse_instruction_type(std::string_view name);
ShotMode parse_shot_mode(std::string_view name);

/// Whether responses to this instruction type are expected to contain a score.
bool asks_for_score(InstructionType type);

struct PromptPattern {
  PatternKind kind{};
  std::string template_text;
};

struct TaskInstruction {
  InstructionType type{};
  int paraphrase_index = 1;  // 1-4
  std::string template_text;
};

/// The four prompt patterns and 32 task instructions.
class TemplateLibrary {
 public:
  /// Parses and validates a template data document.
  static TemplateLibrary parse(std::string_view json_text);
  /// Library compiled from data/prompt_templates.json.
  static const TemplateLibrary& builtin();

  const PromptPattern& pattern(PatternKind kind) const;
  const TaskInstruction& instruction(InstructionType type, int paraphrase_index) const;
  std::span<const PromptPattern> patterns() const { return patterns_; }
  std::span<const TaskInstruction> instructions() const { return instructions_; }

 private:
  std::vector<PromptPattern> patterns_;
  std::vector<TaskInstruction> instructions_;
};

/// Raw bytes of the template data file embedded at build time.
std::string_view builtin_template_data();

struct Strategy {
  PatternKind pattern = PatternKind::Base;
  InstructionType instruction = InstructionType::Scoring;
  int paraphrase = 1;
  ShotMode shot = ShotMode::Zero;

  auto operator<=>(const Strategy&) const = default;
};

std::string to_string(const Strategy& strategy);

/// Cartesian product in pattern, type, paraphrase, shot order.
std::vector<Strategy> enumerate_strategies(std::span<const PatternKind> patterns,
                                           std::span<const InstructionType> types,
                                           std::span<const int> paraphrases,
                                           std::span<const ShotMode> shots);
/// All 128 zero-shot strategies.
std::vector<Strategy> zero_shot_grid();

std::string render_score_range(const corpus::ScoreRange& range);
/// Rubric levels in descending score order, one `Score N: ...` line per
/// level followed by its `- bullet` lines.
std::string render_rubric(const corpus::EssaySet& set);

/// Replaces the known placeholders ({essay_prompt}, {task_instruction},
/// {essay}, {rubric}, {scoring_range}) in a single pass. Substituted values
/// are never rescanned. A known placeholder without a value throws
/// AssemblyError naming it.
std::string substitute(std::string_view text, const std::map<std::string, std::string>& values);

std::string render_instruction(const TaskInstruction& instruction, const corpus::EssaySet& set);

std::string render_pattern(const PromptPattern& pattern, std::string_view essay_prompt,
                           std::string_view instruction_text, std::string_view essay_text);

/// Like render_pattern, with `examples_section` inserted as whole lines
/// between the task line and the student-essay line.
std::string render_pattern_with_examples(const PromptPattern& pattern, std::string_view essay_prompt,
                                         std::string_view instruction_text,
                                         std::string_view essay_text,
                                         std::string_view examples_section);

/// `Essay: "..."`, `Reasoning: ...`, `Scores: {Overall: N}` on three lines.
std::string format_exemplar(const corpus::Exemplar& exemplar);

/// Numbered exemplar blocks, each under a `#### Example k:` heading.
std::string format_exemplar_section(std::span<const corpus::Exemplar> pool,
                                    std::span<const std::size_t> selected);

/// floor((min + max) / 2)
int medium_score(const corpus::ScoreRange& range);

/// Index of a random exemplar at the medium score; falls back to the nearest
/// score. Throws AssemblyError on an empty pool.
std::size_t select_one_shot(std::span<const corpus::Exemplar> pool, const corpus::ScoreRange& range,
                            SeededRng& rng);

/// Character count of the complete prompt for a candidate selection.
using PromptMeasure = std::function<std::size_t(std::span<const std::size_t>)>;

/// Greedy budgeted selection. The first slot goes to a pool-max exemplar and
/// the second to a pool-min exemplar, each the first in shuffled order that
/// fits; then the cycle order of few_shot_order fills the rest. A candidate
/// is kept only if `measure` of the extended selection stays within `budget`.
std::vector<std::size_t> select_few_shot(std::span<const corpus::Exemplar> pool,
                                         const corpus::ScoreRange& range, std::size_t budget,
                                         SeededRng& rng, const PromptMeasure& measure);

/// Budget applied to the exemplar section alone.
std::vector<std::size_t> select_few_shot(std::span<const corpus::Exemplar> pool,
                                         const corpus::ScoreRange& range, std::size_t budget,
                                         SeededRng& rng);

/// Candidate visiting order used by select_few_shot, before budget checks.
std::vector<std::size_t> few_shot_order(std::span<const corpus::Exemplar> pool, SeededRng& rng);

struct PromptMeta {
  Strategy strategy;
  std::vector<std::size_t> exemplar_indices;
  int set_id = 0;
  corpus::EssayId essay_id = 0;
  std::size_t character_count = 0;
  std::size_t budget = 0;        // 0 unless few-shot
  bool over_budget = false;      // few-shot prompt exceeded the budget even without exemplars
};

struct AssembledPrompt {
  std::string text;
  PromptMeta meta;
};

struct AssemblyOptions {
  std::size_t few_shot_budget = kDefaultFewShotBudget;
  const TemplateLibrary* library = nullptr;  // builtin when null
};

AssembledPrompt assemble(const PromptPattern& pattern, const TaskInstruction& instruction,
                         ShotMode shot_mode, const corpus::EssaySet& set, const corpus::Essay& essay,
                         SeededRng& rng, std::size_t few_shot_budget = kDefaultFewShotBudget);

AssembledPrompt assemble(const Strategy& strategy, const corpus::EssaySet& set,
                         const corpus::Essay& essay, SeededRng& rng,
                         const AssemblyOptions& options = {});

}  // namespace essayfb::prompting
