#include "essayfb/extraction.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include <json.hpp>

#include "essayfb/errors.hpp"
#include "essayfb/text.hpp"

namespace essayfb::extraction {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kMethodNames{"json", "pattern", "reprompt", "unscored"};

// End (exclusive) of the brace-balanced region starting at text[open], with
// JSON string literals skipped. npos if unbalanced.
std::size_t match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<double> as_number(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    const auto s = std::string(text::trim(value.get<std::string>()));
    double parsed = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), parsed);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return parsed;
  }
  return std::nullopt;
}

bool key_matches(const std::string& key, const ExtractOptions& options) {
  const auto lower = text::to_lower(key);
  if (std::find(options.keys.begin(), options.keys.end(), lower) != options.keys.end()) return true;
  return !options.key_substring.empty() && lower.find(options.key_substring) != std::string::npos;
}

std::optional<double> find_score(const json& object, const ExtractOptions& options, int depth) {
  // Exact key names take precedence over substring matches.
  for (const auto& [key, value] : object.items()) {
    const auto lower = text::to_lower(key);
    if (std::find(options.keys.begin(), options.keys.end(), lower) != options.keys.end()) {
      if (auto n = as_number(value)) return n;
    }
  }
  for (const auto& [key, value] : object.items()) {
    if (key_matches(key, options)) {
      if (auto n = as_number(value)) return n;
    }
  }
  if (depth > 0) {
    for (const auto& [key, value] : object.items()) {
      if (value.is_object()) {
        if (auto n = find_score(value, options, depth - 1)) return n;
      }
    }
  }
  return std::nullopt;
}

struct Candidate {
  std::size_t offset = 0;
  std::size_t length = 0;
  double value = 0;
};

std::optional<Candidate> last_json_candidate(std::string_view text, const ExtractOptions& options) {
  std::optional<Candidate> last;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string_view::npos) {
    const auto end = match_brace(text, pos);
    if (end == std::string_view::npos) {
      ++pos;
      continue;
    }
    json parsed = json::parse(text.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.is_object()) {
      ++pos;
      continue;
    }
    if (auto value = find_score(parsed, options, 1)) last = Candidate{pos, end - pos, *value};
    pos = end;
  }
  return last;
}

std::optional<Candidate> last_pattern_candidate(std::string_view text) {
  static const std::regex kPatterns[] = {
      std::regex(R"((?:scores?\s*:\s*)?\{\s*"?overall"?\s*:\s*(-?\d+(?:\.\d+)?)\s*\})",
                 std::regex::icase | std::regex::ECMAScript),
      std::regex(R"(\b(?:score|grade)\s*\**\s*[:=]\s*\**\s*(-?\d+(?:\.\d+)?)(?:\s*/\s*\d+)?)",
                 std::regex::icase | std::regex::ECMAScript),
  };
  std::optional<Candidate> last;
  const std::string haystack(text);
  for (const auto& re : kPatterns) {
    for (auto it = std::sregex_iterator(haystack.begin(), haystack.end(), re);
         it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const auto offset = static_cast<std::size_t>(m.position(0));
      if (!last || offset > last->offset) {
        last = Candidate{offset, static_cast<std::size_t>(m.length(0)), std::stod(m.str(1))};
      }
    }
  }
  return last;
}

ScoreExtraction to_extraction(std::string_view text, const Candidate& c, Method method,
                              const corpus::ScoreRange& range) {
  ScoreExtraction out;
  const double rounded = std::round(c.value);  // half away from zero
  if (!std::isfinite(rounded) || rounded < range.min || rounded > range.max) return out;
  out.score = static_cast<int>(rounded);
  out.method = method;
  out.raw_span = std::string(text.substr(c.offset, c.length));
  out.span_offset = c.offset;
  return out;
}

}  // namespace

std::string_view to_string(Method method) { return kMethodNames[static_cast<int>(method)]; }

Method parse_method(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  throw ValidationError("unknown extraction method '" + std::string(name) + "'");
}

ExtractOptions helpfulness_options() {
  ExtractOptions options;
  options.keys = {"helpfulness", "helpfulness_score", "score"};
  options.key_substring = "helpful";
  options.pattern_tier = false;
  return options;
}

ScoreExtraction extract_score(std::string_view response_text, const corpus::ScoreRange& range,
                              const ExtractOptions& options) {
  if (auto c = last_json_candidate(response_text, options)) {
    return to_extraction(response_text, *c, Method::Json, range);
  }
  if (options.pattern_tier) {
    if (auto c = last_pattern_candidate(response_text)) {
      return to_extraction(response_text, *c, Method::Pattern, range);
    }
  }
  return {};
}

std::string build_reprompt(std::string_view prior_response, std::string_view field) {
  std::string out =
      "Below is a response that was written about a student essay. It may contain a " +
      std::string(field) + " for the essay.\n\n### Response:\n\"\"\"\n";
  out += prior_response;
  out += "\n\"\"\"\n\n### Task: Extract the " + std::string(field) +
         " that the response assigns. Do not assign a new " + std::string(field) +
         " yourself. Answer only with a JSON object of the form {\"" + std::string(field) +
         "\": <number>}. If the response does not contain a " + std::string(field) +
         ", answer with {\"" + std::string(field) + "\": null}.";
  return out;
}

ScoreExtraction extract_with_reprompt(std::string_view response_text, const corpus::ScoreRange& range,
                                      const Generate& generate, const ExtractOptions& options,
                                      std::string_view field) {
  auto first = extract_score(response_text, range, options);
  if (first.scored()) return first;
  const auto reply = generate(build_reprompt(response_text, field));
  ExtractOptions json_only = options;
  json_only.pattern_tier = false;
  auto second = extract_score(reply, range, json_only);
  if (!second.scored()) return {};
  second.method = Method::Reprompt;
  second.span_offset.reset();  // the span lives in the re-prompt reply
  return second;
}

FeedbackText split_feedback(std::string_view response_text, const ScoreExtraction& extraction,
                            std::string source_run) {
  std::string body(response_text);
  const bool in_response =
      extraction.method == Method::Json || extraction.method == Method::Pattern;
  if (in_response && !extraction.raw_span.empty()) {
    std::size_t offset = std::string::npos;
    if (extraction.span_offset &&
        response_text.substr(*extraction.span_offset, extraction.raw_span.size()) == extraction.raw_span) {
      offset = *extraction.span_offset;
    } else {
      offset = body.rfind(extraction.raw_span);
    }
    if (offset != std::string::npos) {
      // Feedback delivered inside the JSON object itself is kept.
      std::string replacement;
      if (extraction.method == Method::Json) {
        auto parsed = json::parse(extraction.raw_span, nullptr, false);
        if (parsed.is_object()) {
          for (const auto& [key, value] : parsed.items()) {
            const auto lower = text::to_lower(key);
            const bool prose_key = lower.find("feedback") != std::string::npos ||
                                   lower.find("explanation") != std::string::npos ||
                                   lower.find("reasoning") != std::string::npos ||
                                   lower.find("analysis") != std::string::npos;
            if (prose_key && value.is_string()) {
              if (!replacement.empty()) replacement += "\n\n";
              replacement += value.get<std::string>();
            }
          }
        }
      }
      body.replace(offset, extraction.raw_span.size(), replacement);
      static const std::regex kEmptyFence(R"(```[A-Za-z]*\s*```)");
      body = std::regex_replace(body, kEmptyFence, "");
    }
  }
  FeedbackText out;
  out.text = std::string(text::trim(body));
  out.source_run = std::move(source_run);
  out.empty = out.text.empty();
  return out;
}

Tally tally(std::span<const ScoreExtraction> batch) {
  Tally t;
  for (const auto& e : batch) (e.scored() ? t.scored : t.unscored) += 1;
  return t;
}

}  // namespace essayfb::extraction
