#include "essayfb/prompting.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "essayfb/errors.hpp"
#include "essayfb/text.hpp"

namespace essayfb::prompting {

namespace {

struct Names {
  std::string_view id;
  std::string_view display;
};

constexpr std::array<Names, 4> kPatternNames{{
    {"Base", "Base"},
    {"TeachersAssistant", "TA"},
    {"EducationalResearcher", "ER"},
    {"CreativeWritingMentor", "CWM"},
}};

constexpr std::array<Names, 8> kTypeNames{{
    {"Scoring", "Scoring"},
    {"Feedback", "Feedback"},
    {"ScoringThenFeedback", "Scoring->Feedback"},
    {"FeedbackThenScoring", "Feedback->Scoring"},
    {"ScoringThenFeedbackCoT", "Scoring->Feedback_CoT"},
    {"FeedbackDetailedCoTThenScoring", "Feedback_dCoT->Scoring"},
    {"ScoringThenExplanation", "Scoring->Explanation"},
    {"ExplanationThenScoring", "Explanation->Scoring"},
}};

constexpr std::array<Names, 3> kShotNames{{
    {"Zero", "Zero-shot"},
    {"One", "One-shot"},
    {"Few", "Few-shot"},
}};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<Names, N>& names, std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i].id == name || names[i].display == name) return static_cast<Enum>(i);
  }
  throw ValidationError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

constexpr std::array<std::string_view, 5> kPlaceholders{"essay_prompt", "task_instruction", "essay",
                                                        "rubric", "scoring_range"};

bool is_placeholder(std::string_view name) {
  return std::find(kPlaceholders.begin(), kPlaceholders.end(), name) != kPlaceholders.end();
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace

std::string_view to_string(PatternKind kind) { return kPatternNames[static_cast<int>(kind)].id; }
std::string_view to_string(InstructionType type) { return kTypeNames[static_cast<int>(type)].id; }
std::string_view to_string(ShotMode mode) { return kShotNames[static_cast<int>(mode)].id; }
std::string_view display_name(PatternKind kind) { return kPatternNames[static_cast<int>(kind)].display; }
std::string_view display_name(InstructionType type) { return kTypeNames[static_cast<int>(type)].display; }
std::string_view display_name(ShotMode mode) { return kShotNames[static_cast<int>(mode)].display; }

PatternKind parse_pattern(std::string_view name) {
  return parse_enum<PatternKind>(name, kPatternNames, "prompt pattern");
}
InstructionType parse_instruction_type(std::string_view name) {
  return parse_enum<InstructionType>(name, kTypeNames, "task instruction type");
}
ShotMode parse_shot_mode(std::string_view name) {
  return parse_enum<ShotMode>(name, kShotNames, "shot mode");
}

bool asks_for_score(InstructionType type) { return type != InstructionType::Feedback; }

TemplateLibrary TemplateLibrary::parse(std::string_view json_text) {
  using nlohmann::json;
  TemplateLibrary lib;
  try {
    const auto doc = json::parse(json_text);
    for (const auto& p : doc.at("patterns")) {
      lib.patterns_.push_back(
          {parse_pattern(p.at("kind").get<std::string>()), p.at("template").get<std::string>()});
    }
    for (const auto& group : doc.at("instructions")) {
      const auto type = parse_instruction_type(group.at("type").get<std::string>());
      int index = 0;
      for (const auto& paraphrase : group.at("paraphrases")) {
        lib.instructions_.push_back({type, ++index, paraphrase.get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("template data: ") + e.what());
  }

  for (auto kind : kAllPatterns) {
    auto n = std::count_if(lib.patterns_.begin(), lib.patterns_.end(),
                           [&](const auto& p) { return p.kind == kind; });
    if (n != 1) throw ValidationError("template data must define pattern " + std::string(to_string(kind)) + " once");
  }
  for (const auto& p : lib.patterns_) {
    for (auto name : {"{essay_prompt}", "{task_instruction}", "{essay}"}) {
      if (count_occurrences(p.template_text, name) != 1) {
        throw ValidationError("pattern " + std::string(to_string(p.kind)) + " must contain " + name +
                              " exactly once");
      }
    }
  }
  for (auto type : kAllInstructionTypes) {
    auto n = std::count_if(lib.instructions_.begin(), lib.instructions_.end(),
                           [&](const auto& i) { return i.type == type; });
    if (n != kParaphrasesPerType) {
      throw ValidationError("template data must define " + std::to_string(kParaphrasesPerType) +
                            " paraphrases for " + std::string(to_string(type)));
    }
  }
  return lib;
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib = parse(builtin_template_data());
  return lib;
}

const PromptPattern& TemplateLibrary::pattern(PatternKind kind) const {
  for (const auto& p : patterns_) {
    if (p.kind == kind) return p;
  }
  throw AssemblyError("no template for pattern " + std::string(to_string(kind)));
}

const TaskInstruction& TemplateLibrary::instruction(InstructionType type, int paraphrase_index) const {
  for (const auto& i : instructions_) {
    if (i.type == type && i.paraphrase_index == paraphrase_index) return i;
  }
  throw AssemblyError("no task instruction " + std::string(to_string(type)) + "#" +
                      std::to_string(paraphrase_index));
}

std::string to_string(const Strategy& s) {
  return std::string(to_string(s.pattern)) + "/" + std::string(to_string(s.instruction)) + "/p" +
         std::to_string(s.paraphrase) + "/" + std::string(to_string(s.shot));
}

std::vector<Strategy> enumerate_strategies(std::span<const PatternKind> patterns,
                                           std::span<const InstructionType> types,
                                           std::span<const int> paraphrases,
                                           std::span<const ShotMode> shots) {
  std::vector<Strategy> out;
  out.reserve(patterns.size() * types.size() * paraphrases.size() * shots.size());
  for (auto pattern : patterns) {
    for (auto type : types) {
      for (int paraphrase : paraphrases) {
        if (paraphrase < 1 || paraphrase > kParaphrasesPerType) {
          throw ValidationError("paraphrase index must be within 1-4, got " + std::to_string(paraphrase));
        }
        for (auto shot : shots) out.push_back({pattern, type, paraphrase, shot});
      }
    }
  }
  return out;
}

std::vector<Strategy> zero_shot_grid() {
  const std::array<int, 4> paraphrases{1, 2, 3, 4};
  const std::array<ShotMode, 1> zero{ShotMode::Zero};
  return enumerate_strategies(kAllPatterns, kAllInstructionTypes, paraphrases, zero);
}

std::string render_score_range(const corpus::ScoreRange& range) {
  return std::to_string(range.min) + "–" + std::to_string(range.max);
}

std::string render_rubric(const corpus::EssaySet& set) {
  std::vector<const corpus::RubricLevel*> levels;
  for (const auto& level : set.rubric) levels.push_back(&level);
  std::stable_sort(levels.begin(), levels.end(),
                   [](const auto* a, const auto* b) { return a->score > b->score; });
  std::string out;
  for (const auto* level : levels) {
    if (!out.empty()) out += '\n';
    out += "Score " + std::to_string(level->score) + ": " + level->description;
    for (const auto& bullet : level->bullets) out += "\n- " + bullet;
  }
  return out;
}

std::string substitute(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string_view::npos) break;
    const auto close = text.find('}', open + 1);
    if (close == std::string_view::npos) break;
    const auto name = text.substr(open + 1, close - open - 1);
    out.append(text.substr(pos, open - pos));
    if (is_placeholder(name)) {
      auto it = values.find(std::string(name));
      if (it == values.end()) {
        throw AssemblyError("no value for placeholder {" + std::string(name) + "}");
      }
      out += it->second;
      pos = close + 1;
    } else {
      out += '{';
      pos = open + 1;
    }
  }
  out.append(text.substr(pos));
  return out;
}

std::string render_instruction(const TaskInstruction& instruction, const corpus::EssaySet& set) {
  std::map<std::string, std::string> values;
  values["scoring_range"] = render_score_range(set.score_range);
  if (!set.rubric.empty()) values["rubric"] = render_rubric(set);
  return substitute(instruction.template_text, values);
}

std::string render_pattern_with_examples(const PromptPattern& pattern, std::string_view essay_prompt,
                                         std::string_view instruction_text,
                                         std::string_view essay_text,
                                         std::string_view examples_section) {
  if (essay_text.empty()) throw AssemblyError("essay text is empty");
  if (essay_prompt.empty()) throw AssemblyError("essay prompt is empty");
  if (instruction_text.empty()) throw AssemblyError("task instruction is empty");

  const std::map<std::string, std::string> values{
      {"essay_prompt", std::string(essay_prompt)},
      {"task_instruction", std::string(instruction_text)},
      {"essay", std::string(essay_text)},
  };
  const std::string_view tmpl = pattern.template_text;
  if (examples_section.empty()) return substitute(tmpl, values);

  const auto essay_pos = tmpl.find("{essay}");
  const auto line_start = tmpl.rfind('\n', essay_pos);
  if (essay_pos == std::string_view::npos || line_start == std::string_view::npos) {
    throw AssemblyError("pattern " + std::string(to_string(pattern.kind)) +
                        " has no separate student-essay line");
  }
  std::string out = substitute(tmpl.substr(0, line_start), values);
  out += '\n';
  out += examples_section;
  if (out.back() == '\n') out.pop_back();
  out += substitute(tmpl.substr(line_start), values);
  return out;
}

std::string render_pattern(const PromptPattern& pattern, std::string_view essay_prompt,
                           std::string_view instruction_text, std::string_view essay_text) {
  return render_pattern_with_examples(pattern, essay_prompt, instruction_text, essay_text, {});
}

std::string format_exemplar(const corpus::Exemplar& exemplar) {
  return "Essay: \"" + exemplar.essay_text + "\"\nReasoning: " + exemplar.reasoning +
         "\nScores: {Overall: " + std::to_string(exemplar.score) + "}";
}

std::string format_exemplar_section(std::span<const corpus::Exemplar> pool,
                                    std::span<const std::size_t> selected) {
  std::string out;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (k) out += '\n';
    out += "#### Example " + std::to_string(k + 1) + ":\n" + format_exemplar(pool[selected[k]]);
  }
  return out;
}

int medium_score(const corpus::ScoreRange& range) { return (range.min + range.max) / 2; }

std::size_t select_one_shot(std::span<const corpus::Exemplar> pool, const corpus::ScoreRange& range,
                            SeededRng& rng) {
  if (pool.empty()) throw AssemblyError("one-shot selection from an empty exemplar pool");
  const int target = medium_score(range);
  int best_distance = std::abs(pool[0].score - target);
  for (const auto& ex : pool) best_distance = std::min(best_distance, std::abs(ex.score - target));
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (std::abs(pool[i].score - target) == best_distance) candidates.push_back(i);
  }
  return candidates[rng.index(candidates.size())];
}

std::vector<std::size_t> few_shot_order(std::span<const corpus::Exemplar> pool, SeededRng& rng) {
  std::map<int, std::vector<std::size_t>, std::greater<>> by_score;
  for (std::size_t i = 0; i < pool.size(); ++i) by_score[pool[i].score].push_back(i);
  for (auto& [score, group] : by_score) rng.shuffle(std::span<std::size_t>(group));
  if (by_score.empty()) return {};

  std::vector<const std::vector<std::size_t>*> cycle;
  cycle.push_back(&by_score.begin()->second);
  if (by_score.size() > 1) cycle.push_back(&by_score.rbegin()->second);
  for (auto it = std::next(by_score.begin()); it != by_score.end(); ++it) {
    if (std::next(it) != by_score.end()) cycle.push_back(&it->second);
  }

  std::vector<std::size_t> order;
  order.reserve(pool.size());
  for (std::size_t round = 0; order.size() < pool.size(); ++round) {
    for (const auto* group : cycle) {
      if (round < group->size()) order.push_back((*group)[round]);
    }
  }
  return order;
}

std::vector<std::size_t> select_few_shot(std::span<const corpus::Exemplar> pool,
                                         const corpus::ScoreRange& range, std::size_t budget,
                                         SeededRng& rng, const PromptMeasure& measure) {
  (void)range;  // selection is driven by the scores present in the pool
  const auto order = few_shot_order(pool, rng);
  if (order.empty()) return {};
  std::vector<std::size_t> selected;
  std::vector<bool> used(pool.size(), false);
  auto try_add = [&](std::size_t candidate) {
    if (used[candidate]) return false;
    selected.push_back(candidate);
    if (measure(selected) > budget) {
      selected.pop_back();
      return false;
    }
    used[candidate] = true;
    return true;
  };

  // The first two slots go to a pool-max and a pool-min exemplar if any of
  // them fits; the rest follow the cycle order.
  const int max_score = pool[order.front()].score;
  int min_score = max_score;
  for (const auto& ex : pool) min_score = std::min(min_score, ex.score);
  for (auto candidate : order) {
    if (pool[candidate].score == max_score && try_add(candidate)) break;
  }
  if (min_score != max_score) {
    for (auto candidate : order) {
      if (pool[candidate].score == min_score && try_add(candidate)) break;
    }
  }
  for (auto candidate : order) try_add(candidate);
  return selected;
}

std::vector<std::size_t> select_few_shot(std::span<const corpus::Exemplar> pool,
                                         const corpus::ScoreRange& range, std::size_t budget,
                                         SeededRng& rng) {
  return select_few_shot(pool, range, budget, rng, [&](std::span<const std::size_t> selection) {
    return text::utf8_length(format_exemplar_section(pool, selection));
  });
}

AssembledPrompt assemble(const PromptPattern& pattern, const TaskInstruction& instruction,
                         ShotMode shot_mode, const corpus::EssaySet& set, const corpus::Essay& essay,
                         SeededRng& rng, std::size_t few_shot_budget) {
  const std::string instruction_text = render_instruction(instruction, set);
  auto render = [&](std::span<const std::size_t> selection) {
    return render_pattern_with_examples(pattern, set.essay_prompt, instruction_text, essay.text,
                                        format_exemplar_section(set.exemplars, selection));
  };

  AssembledPrompt prompt;
  prompt.meta.strategy = {pattern.kind, instruction.type, instruction.paraphrase_index, shot_mode};
  prompt.meta.set_id = set.set_id;
  prompt.meta.essay_id = essay.essay_id;

  switch (shot_mode) {
    case ShotMode::Zero:
      break;
    case ShotMode::One:
      prompt.meta.exemplar_indices.push_back(select_one_shot(set.exemplars, set.score_range, rng));
      break;
    case ShotMode::Few: {
      if (set.exemplars.empty()) throw AssemblyError("few-shot assembly needs a non-empty exemplar pool");
      prompt.meta.budget = few_shot_budget;
      prompt.meta.exemplar_indices = select_few_shot(
          set.exemplars, set.score_range, few_shot_budget, rng,
          [&](std::span<const std::size_t> selection) { return text::utf8_length(render(selection)); });
      break;
    }
  }
  prompt.text = render(prompt.meta.exemplar_indices);
  prompt.meta.character_count = text::utf8_length(prompt.text);
  prompt.meta.over_budget = shot_mode == ShotMode::Few && prompt.meta.character_count > few_shot_budget;
  return prompt;
}

AssembledPrompt assemble(const Strategy& strategy, const corpus::EssaySet& set,
                         const corpus::Essay& essay, SeededRng& rng, const AssemblyOptions& options) {
  const auto& lib = options.library ? *options.library : TemplateLibrary::builtin();
  return assemble(lib.pattern(strategy.pattern), lib.instruction(strategy.instruction, strategy.paraphrase),
                  strategy.shot, set, essay, rng, options.few_shot_budget);
}

}  // namespace essayfb::prompting
