#include "support/extraction_cases.hpp"

namespace fixture {

using essayfb::extraction::Method;

const std::vector<Case>& extraction_cases() {
  static const std::vector<Case> all{
      {"json_only", R"({"score": 4})", {1, 6}, 4, Method::Json},
      {"json_after_prose", "The essay is clear.\n{\"score\": 3}", {1, 6}, 3, Method::Json},
      {"json_fenced", "Feedback text.\n```json\n{\"score\": 2}\n```", {0, 3}, 2, Method::Json},
      {"json_last_wins", R"({"score": 1} later {"score": 5})", {1, 6}, 5, Method::Json},
      {"json_overall_key", R"({"Overall": 9})", {2, 12}, 9, Method::Json},
      {"json_nested", R"({"result": {"final_score": 3}})", {0, 4}, 3, Method::Json},
      {"json_string_number", R"({"score": "2"})", {0, 3}, 2, Method::Json},
      {"json_fraction_rounds_up", R"({"score": 2.5})", {0, 3}, 3, Method::Json},
      {"json_fraction_rounds_down", R"({"score": 2.4})", {0, 3}, 2, Method::Json},
      {"json_with_feedback_field", R"({"feedback": "Use more detail.", "score": 1})", {0, 3}, 1, Method::Json},
      {"json_braces_inside_string", R"({"feedback": "use {curly} braces", "score": 2})", {0, 3}, 2, Method::Json},
      {"json_out_of_range", R"({"score": 7})", {0, 3}, std::nullopt, Method::Unscored},
      {"json_out_of_range_last", R"({"score": 2} {"score": 9})", {0, 3}, std::nullopt, Method::Unscored},
      {"json_null", R"({"score": null})", {0, 3}, std::nullopt, Method::Unscored},
      {"overall_block", "Scores: {Overall: 3}\nGood structure.", {1, 6}, 3, Method::Pattern},
      {"overall_block_no_label", "Feedback first. {Overall: 10}", {2, 12}, 10, Method::Pattern},
      {"score_colon", "Score: 4/6\nNice work.", {1, 6}, 4, Method::Pattern},
      {"bold_score", "**Score:** 2", {0, 3}, 2, Method::Pattern},
      {"grade_equals", "grade = 5", {0, 30}, 5, Method::Pattern},
      {"pattern_last_wins", "Score: 2 ... Scores: {Overall: 3}", {0, 3}, 3, Method::Pattern},
      {"pattern_out_of_range", "Scores: {Overall: 61}", {0, 60}, std::nullopt, Method::Unscored},
      {"no_score", "The essay needs more examples.", {0, 3}, std::nullopt, Method::Unscored},
      {"score_in_prose", "I think it deserves a 2 overall.", {0, 3}, std::nullopt, Method::Unscored},
      {"malformed_json", R"({"score": 2)", {0, 3}, std::nullopt, Method::Unscored},
      {"negative", "Score: -1", {0, 3}, std::nullopt, Method::Unscored},
  };
  return all;
}

}  // namespace fixture
