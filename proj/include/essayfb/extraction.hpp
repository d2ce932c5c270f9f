#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "essayfb/corpus.hpp"

namespace essayfb::extraction {

enum class Method { Json, Pattern, Reprompt, Unscored };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct ScoreExtraction {
  std::optional<int> score;
  Method method = Method::Unscored;
  std::string raw_span;
  // Byte offset of raw_span in the text it was extracted from.
  std::optional<std::size_t> span_offset;

  bool scored() const { return score.has_value(); }
};

/// Which JSON fields count as a score. Keys match case-insensitively; a key
/// also matches when it contains `key_substring` (if non-empty).
struct ExtractOptions {
  std::vector<std::string> keys{"score", "overall", "overall_score", "final_score", "grade",
                                "total_score"};
  std::string key_substring = "score";
  bool pattern_tier = true;
};

/// Options used for helpfulness judgments.
ExtractOptions helpfulness_options();

/// Tiered extraction: the last well-formed JSON object carrying a numeric
/// score field, else the last `Scores: {Overall: N}` / `Score: N` match,
/// else unscored. Fractional values round half away from zero; values
/// outside `range` yield unscored.
ScoreExtraction extract_score(std::string_view response_text, const corpus::ScoreRange& range,
                              const ExtractOptions& options = {});

/// Bare extraction prompt quoting the prior response verbatim.
std::string build_reprompt(std::string_view prior_response, std::string_view field = "score");

using Generate = std::function<std::string(const std::string& prompt)>;

/// extract_score, followed by exactly one re-prompt round when unscored.
ScoreExtraction extract_with_reprompt(std::string_view response_text, const corpus::ScoreRange& range,
                                      const Generate& generate, const ExtractOptions& options = {},
                                      std::string_view field = "score");

struct FeedbackText {
  std::string text;
  std::string source_run;
  bool empty = true;
};

/// Removes the score block that produced `extraction` and trims the rest.
FeedbackText split_feedback(std::string_view response_text, const ScoreExtraction& extraction,
                            std::string source_run = {});

struct Tally {
  std::size_t scored = 0;
  std::size_t unscored = 0;
  std::size_t total() const { return scored + unscored; }
};

Tally tally(std::span<const ScoreExtraction> batch);

}  // namespace essayfb::extraction
