#include "essayfb/judge.hpp"

#include <fstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "essayfb/errors.hpp"
#include "essayfb/extraction.hpp"
#include "essayfb/text.hpp"

namespace essayfb::judge {

using nlohmann::json;

namespace {

constexpr std::string_view kTemplate =
    "You are given an essay and feedback from a teacher for this essay. Your task is to evaluate "
    "the helpfulness of the feedback.\n"
    "\n"
    "# Task:\n"
    "Evaluate the helpfulness of the feedback. Helpful feedback should explain what the errors are, "
    "why they are errors, and how to fix them. Give a score between 1 and 10, where 1 means the "
    "feedback is not helpful at all, and 10 means the feedback is very helpful.\n"
    "\n"
    "Provide the output in the following output:\n"
    "{format_instructions}";

constexpr std::string_view kFormatInstructions =
    "Answer with a single JSON object of the form {\"helpfulness\": <integer 1-10>} and nothing "
    "else.";

const corpus::ScoreRange kRange{kMinHelpfulness, kMaxHelpfulness};

}  // namespace

std::string_view judge_template() { return kTemplate; }
std::string_view format_instructions() { return kFormatInstructions; }

std::string build_judge_prompt(std::string_view essay, std::string_view feedback) {
  if (text::trim(feedback).empty()) throw ValidationError("cannot judge empty feedback");
  std::string prompt(kTemplate);
  prompt.replace(prompt.find("{format_instructions}"), std::string_view("{format_instructions}").size(),
                 kFormatInstructions);
  prompt += "\n\n# Essay:\n\"";
  prompt += essay;
  prompt += "\"\n\n# Feedback:\n\"";
  prompt += feedback;
  prompt += "\"";
  return prompt;
}

HelpfulnessJudgment judge(std::string_view essay, std::string_view feedback, llm::Generator& generator,
                          std::string item, std::string_view generator_model) {
  const auto prompt = build_judge_prompt(essay, feedback);
  const auto first = generator.generate_text(prompt);
  const auto options = extraction::helpfulness_options();
  const auto extracted = extraction::extract_with_reprompt(
      first.text, kRange,
      [&](const std::string& reprompt) { return generator.generate_text(reprompt).text; }, options,
      "helpfulness");
  if (!extracted.scored()) {
    throw JudgmentError("no helpfulness score in judge response for " +
                        (item.empty() ? std::string("item") : item));
  }
  HelpfulnessJudgment out;
  out.item = std::move(item);
  out.judge_model = generator.model_name();
  out.score = *extracted.score;
  out.raw_response = first.text;
  out.self_judged = !generator_model.empty() && generator_model == out.judge_model;
  out.timestamp = text::utc_timestamp();
  return out;
}

std::vector<FacetRow> aggregate_helpfulness(
    const std::vector<std::pair<std::string, std::vector<HelpfulnessJudgment>>>& groups) {
  std::vector<FacetRow> rows;
  for (const auto& [facet, judgments] : groups) {
    std::vector<double> scores;
    for (const auto& j : judgments) {
      if (j.score < kMinHelpfulness || j.score > kMaxHelpfulness) {
        spdlog::warn("ignoring out-of-range helpfulness {} for {}", j.score, j.item);
        continue;
      }
      scores.push_back(j.score);
    }
    if (scores.empty()) {
      spdlog::warn("facet '{}' has no judgments; row omitted", facet);
      continue;
    }
    const auto ms = metrics::mean_std(scores);
    rows.push_back({facet, ms.mean, ms.std, scores.size()});
  }
  return rows;
}

std::string to_jsonl_line(const HelpfulnessJudgment& j) {
  return json{{"item", j.item},
              {"judge_model", j.judge_model},
              {"score", j.score},
              {"raw_response", j.raw_response},
              {"self_judged", j.self_judged},
              {"timestamp", j.timestamp}}
      .dump();
}

HelpfulnessJudgment from_json_line(std::string_view line) {
  try {
    const auto doc = json::parse(line);
    HelpfulnessJudgment j;
    j.item = doc.at("item").get<std::string>();
    j.judge_model = doc.at("judge_model").get<std::string>();
    j.score = doc.at("score").get<int>();
    j.raw_response = doc.value("raw_response", std::string{});
    j.self_judged = doc.value("self_judged", false);
    j.timestamp = doc.value("timestamp", std::string{});
    return j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("judgment record: ") + e.what());
  }
}

std::vector<HelpfulnessJudgment> load_judgments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<HelpfulnessJudgment> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(from_json_line(line));
  }
  return out;
}

void save_judgments(const std::filesystem::path& path, std::span<const HelpfulnessJudgment> judgments) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& j : judgments) out << to_jsonl_line(j) << '\n';
}

}  // namespace essayfb::judge
