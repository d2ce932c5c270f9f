#include "essayfb/scripted_model.hpp"

#include <chrono>

#include "essayfb/errors.hpp"
#include "essayfb/extraction.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/random.hpp"
#include "essayfb/text.hpp"

namespace essayfb::llm {

namespace {

constexpr std::string_view kReprompt = "Below is a response that was written about a student essay.";
constexpr std::string_view kJudgeAnchor = "Your task is to evaluate the helpfulness of the feedback.";
constexpr std::string_view kProseScore = "Overall I would give this essay a ";

const std::array<std::string_view, 4> kFeedback{
    "The essay answers the prompt, but the support stays general. Pick one example from the text and "
    "explain in a sentence or two how it proves your point.",
    "Your main idea is clear. The middle paragraph repeats the opening claim instead of adding evidence; "
    "replace it with a specific detail and say why it matters.",
    "Several sentences run together, which makes the argument hard to follow. Split long sentences and "
    "use transitions such as 'for example' and 'as a result'.",
    "The conclusion introduces a new idea that is never supported. End by restating your claim and the "
    "strongest piece of evidence you gave.",
};

std::uint64_t strategy_code(const prompting::Strategy& s) {
  return static_cast<std::uint64_t>(s.pattern) * 1000 + static_cast<std::uint64_t>(s.instruction) * 100 +
         static_cast<std::uint64_t>(s.paraphrase) * 10 + static_cast<std::uint64_t>(s.shot);
}

std::string json_score(int n) { return "{\"score\": " + std::to_string(n) + "}"; }

}  // namespace

ScriptedModel::ScriptedModel(const corpus::Corpus& corpus, std::uint64_t seed,
                             const prompting::TemplateLibrary* library)
    : corpus_(corpus), seed_(seed), library_(library ? *library : prompting::TemplateLibrary::builtin()) {
  for (const auto& e : corpus_.essays) by_text_.emplace(e.text, &e);
}

std::optional<ScriptedModel::Decoded> ScriptedModel::decode(std::string_view prompt) const {
  Decoded out;
  bool have_pattern = false;
  for (const auto& p : library_.patterns()) {
    const auto intro = std::string_view(p.template_text).substr(0, p.template_text.find('\n'));
    if (prompt.substr(0, intro.size()) == intro) {
      out.strategy.pattern = p.kind;
      have_pattern = true;
    }
  }
  if (!have_pattern) return std::nullopt;

  const auto line = prompt.rfind("\n#### ");
  if (line == std::string_view::npos) return std::nullopt;
  const auto open = prompt.find(": \"", line);
  if (open == std::string_view::npos || prompt.back() != '"') return std::nullopt;
  const auto essay = prompt.substr(open + 3, prompt.size() - open - 4);
  auto it = by_text_.find(essay);
  if (it == by_text_.end()) return std::nullopt;
  out.essay = it->second;

  // Paraphrases of different types can share an opening, so match the
  // whole rendered instruction and keep the longest hit.
  const auto& set = corpus_.set(out.essay->set_id);
  std::size_t best = 0;
  for (const auto& ins : library_.instructions()) {
    std::string rendered;
    try {
      rendered = prompting::render_instruction(ins, set);
    } catch (const Error&) {
      continue;
    }
    if (rendered.size() > best && prompt.find(rendered) != std::string_view::npos) {
      best = rendered.size();
      out.strategy.instruction = ins.type;
      out.strategy.paraphrase = ins.paraphrase_index;
    }
  }
  if (best == 0) return std::nullopt;

  std::size_t examples = 0;
  for (auto pos = prompt.find("#### Example "); pos != std::string_view::npos;
       pos = prompt.find("#### Example ", pos + 1)) {
    ++examples;
  }
  out.strategy.shot = examples == 0 ? prompting::ShotMode::Zero
                      : examples == 1 ? prompting::ShotMode::One
                                      : prompting::ShotMode::Few;
  return out;
}

ScriptedModel::Outcome ScriptedModel::outcome(const prompting::Strategy& strategy,
                                              const corpus::Essay& essay) const {
  const auto h = mix_seed(seed_, strategy_code(strategy), static_cast<std::uint64_t>(essay.essay_id));
  const auto& feedback = kFeedback[(h >> 16) % kFeedback.size()];
  Outcome out;
  if (!prompting::asks_for_score(strategy.instruction)) {
    out.response = std::string(feedback);
    return out;
  }

  const auto& range = corpus_.set(essay.set_id).score_range;
  const int step = std::max(1, (range.max - range.min) / 6);
  const int delta = (static_cast<int>((h >> 8) % 5) - 2) * step;
  const int n = std::clamp(essay.gold_score + delta, range.min, range.max);

  switch (h % 20) {
    case 0:
      out.response = std::string(feedback) + "\n\n" + std::string(kProseScore) + std::to_string(n) + ".";
      out.needs_reprompt = true;
      out.score = n;
      return out;
    case 1:
      out.response = std::string(feedback) + "\n\nIt is a solid effort with room to grow.";
      out.needs_reprompt = true;
      return out;
    case 2:
      out.response = std::string(feedback) + "\n\n" + json_score(range.max + 1 + static_cast<int>(h % 7));
      out.needs_reprompt = true;
      return out;
    default:
      break;
  }
  out.score = n;
  using prompting::InstructionType;
  switch (strategy.instruction) {
    case InstructionType::Scoring:
      out.response = json_score(n);
      break;
    case InstructionType::ScoringThenFeedback:
    case InstructionType::ScoringThenFeedbackCoT:
    case InstructionType::ScoringThenExplanation:
      out.response = "Scores: {Overall: " + std::to_string(n) + "}\n\n" + std::string(feedback);
      break;
    default:
      out.response = std::string(feedback) + "\n\n```json\n" + json_score(n) + "\n```";
      break;
  }
  return out;
}

int ScriptedModel::helpfulness(std::string_view feedback) const {
  const auto digest = text::sha256_hex(feedback);
  const auto h = mix_seed(seed_, std::stoull(digest.substr(0, 12), nullptr, 16));
  return judge::kMinHelpfulness + static_cast<int>(h % 10);
}

MockReply ScriptedModel::reply(std::string_view prompt) const {
  if (prompt.substr(0, kReprompt.size()) == kReprompt) {
    if (prompt.find("may contain a helpfulness") != std::string_view::npos) return {200, "{\"helpfulness\": null}"};
    const auto pos = prompt.find(kProseScore);
    if (pos == std::string_view::npos) return {200, "{\"score\": null}"};
    const auto digits = prompt.substr(pos + kProseScore.size());
    return {200, json_score(std::stoi(std::string(digits.substr(0, digits.find('.')))))};
  }
  if (prompt.find(kJudgeAnchor) != std::string_view::npos) {
    constexpr std::string_view marker = "# Feedback:\n\"";
    const auto pos = prompt.rfind(marker);
    if (pos == std::string_view::npos || prompt.back() != '"') return {200, "I cannot judge this."};
    const auto feedback = prompt.substr(pos + marker.size(), prompt.size() - pos - marker.size() - 1);
    return {200, "{\"helpfulness\": " + std::to_string(helpfulness(feedback)) + "}"};
  }
  if (auto decoded = decode(prompt)) return {200, outcome(decoded->strategy, *decoded->essay).response};
  return {200, "I am not sure what to do with this request."};
}

MockEndpoint::Responder ScriptedModel::responder() const {
  return [this](const std::string& prompt, const nlohmann::json&) { return reply(prompt); };
}

GenerationResponse ScriptedGenerator::generate(const GenerationRequest& req) {
  calls_.fetch_add(1);
  const auto reply = model_.reply(req.prompt);
  GenerationResponse out;
  out.text = reply.content;
  out.finish_reason = reply.finish_reason;
  out.attempts = 1;
  return out;
}

}  // namespace essayfb::llm
