#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "essayfb/llm_client.hpp"
#include "essayfb/metrics.hpp"

namespace essayfb::judge {

inline constexpr int kMinHelpfulness = 1;
inline constexpr int kMaxHelpfulness = 10;

struct HelpfulnessJudgment {
  std::string item;  // run id of the judged feedback
  std::string judge_model;
  int score = 0;
  std::string raw_response;
  bool self_judged = false;  // judge model also generated the feedback
  std::string timestamp;     // ISO-8601 UTC
};

/// The judge instruction block, with {format_instructions} still in place.
std::string_view judge_template();
/// Text that replaces {format_instructions}.
std::string_view format_instructions();

/// Throws ValidationError on empty feedback.
std::string build_judge_prompt(std::string_view essay, std::string_view feedback);

/// Asks the judge model for a 1-10 helpfulness score; one re-prompt when
/// nothing usable comes back, then JudgmentError.
HelpfulnessJudgment judge(std::string_view essay, std::string_view feedback, llm::Generator& generator,
                          std::string item = {}, std::string_view generator_model = {});

struct FacetRow {
  std::string facet;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// mean/std/n per facet. Judgments outside 1-10 are skipped and empty
/// facets dropped, both with a warning.
std::vector<FacetRow> aggregate_helpfulness(
    const std::vector<std::pair<std::string, std::vector<HelpfulnessJudgment>>>& groups);

std::string to_jsonl_line(const HelpfulnessJudgment& j);
HelpfulnessJudgment from_json_line(std::string_view line);
std::vector<HelpfulnessJudgment> load_judgments(const std::filesystem::path& path);
void save_judgments(const std::filesystem::path& path, std::span<const HelpfulnessJudgment> judgments);

}  // namespace essayfb::judge
