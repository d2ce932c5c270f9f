#include "essayfb/records.hpp"

#include <sstream>

#include "essayfb/errors.hpp"
#include "essayfb/text.hpp"

namespace essayfb::experiment {

using nlohmann::json;

std::string_view to_string(SplitRole role) { return role == SplitRole::Dev ? "dev" : "test"; }

SplitRole parse_split_role(std::string_view name) {
  if (name == "dev") return SplitRole::Dev;
  if (name == "test") return SplitRole::Test;
  throw ValidationError("unknown split role '" + std::string(name) + "'");
}

std::string make_run_id(const prompting::Strategy& s, int set_id, int fold, SplitRole split,
                        corpus::EssayId essay_id) {
  return prompting::to_string(s) + "/s" + std::to_string(set_id) + "/f" + std::to_string(fold) + "/" +
         std::string(to_string(split)) + "/e" + std::to_string(essay_id);
}

std::string RunRecord::run_id() const { return make_run_id(strategy, set_id, fold, split, essay_id); }

json to_json(const RunRecord& r) {
  json extraction{{"method", extraction::to_string(r.extraction.method)},
                  {"raw_span", r.extraction.raw_span}};
  extraction["score"] = r.extraction.score ? json(*r.extraction.score) : json(nullptr);
  extraction["span_offset"] = r.extraction.span_offset ? json(*r.extraction.span_offset) : json(nullptr);
  return {
      {"run_id", r.run_id()},
      {"pattern", prompting::to_string(r.strategy.pattern)},
      {"instruction_type", prompting::to_string(r.strategy.instruction)},
      {"paraphrase", r.strategy.paraphrase},
      {"shot_mode", prompting::to_string(r.strategy.shot)},
      {"set_id", r.set_id},
      {"fold", r.fold},
      {"split", to_string(r.split)},
      {"essay_id", r.essay_id},
      {"gold_score", r.gold_score},
      {"prompt_digest", r.prompt_digest},
      {"prompt_chars", r.prompt_chars},
      {"exemplars", r.exemplars},
      {"over_budget", r.over_budget},
      {"response", r.response},
      {"extraction", extraction},
      {"feedback", {{"text", r.feedback.text}, {"empty", r.feedback.empty}}},
      {"latency_ms", r.latency_ms},
      {"cached", r.cached},
  };
}

RunRecord record_from_json(const json& doc) {
  try {
    RunRecord r;
    r.strategy.pattern = prompting::parse_pattern(doc.at("pattern").get<std::string>());
    r.strategy.instruction = prompting::parse_instruction_type(doc.at("instruction_type").get<std::string>());
    r.strategy.paraphrase = doc.at("paraphrase").get<int>();
    r.strategy.shot = prompting::parse_shot_mode(doc.at("shot_mode").get<std::string>());
    r.set_id = doc.at("set_id").get<int>();
    r.fold = doc.at("fold").get<int>();
    r.split = parse_split_role(doc.at("split").get<std::string>());
    r.essay_id = doc.at("essay_id").get<corpus::EssayId>();
    r.gold_score = doc.at("gold_score").get<int>();
    r.prompt_digest = doc.value("prompt_digest", std::string{});
    r.prompt_chars = doc.value("prompt_chars", std::size_t{0});
    r.exemplars = doc.value("exemplars", std::vector<std::size_t>{});
    r.over_budget = doc.value("over_budget", false);
    r.response = doc.at("response").get<std::string>();
    const auto& ex = doc.at("extraction");
    r.extraction.method = extraction::parse_method(ex.at("method").get<std::string>());
    if (!ex.at("score").is_null()) r.extraction.score = ex["score"].get<int>();
    r.extraction.raw_span = ex.value("raw_span", std::string{});
    if (ex.contains("span_offset") && !ex["span_offset"].is_null()) {
      r.extraction.span_offset = ex["span_offset"].get<std::size_t>();
    }
    if (r.extraction.scored() == (r.extraction.method == extraction::Method::Unscored)) {
      throw ValidationError("record " + r.run_id() + ": extraction method and score disagree");
    }
    r.feedback.text = doc.at("feedback").at("text").get<std::string>();
    r.feedback.empty = doc["feedback"].value("empty", r.feedback.text.empty());
    r.feedback.source_run = r.run_id();
    r.latency_ms = doc.value("latency_ms", std::int64_t{0});
    r.cached = doc.value("cached", false);
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("run record: ") + e.what());
  }
}

json to_json(const RunFailure& f) {
  return {{"run_id", f.run_id}, {"error_kind", f.error_kind}, {"message", f.message}};
}

std::vector<RunRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": not a JSON record");
    }
    out.push_back(record_from_json(doc));
  }
  return out;
}

void save_records(const std::filesystem::path& path, std::span<const RunRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

void save_failures(const std::filesystem::path& path, std::span<const RunFailure> failures) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& f : failures) out << to_json(f).dump() << '\n';
}

RecordWriter::RecordWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::app) {
  if (!out_) throw Error("cannot open " + path.string() + " for appending");
}

void RecordWriter::append(const RunRecord& record) {
  const auto line = to_json(record).dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
}

void RecordWriter::append(const RunFailure& failure) {
  auto doc = to_json(failure);
  doc["failed"] = true;
  const auto line = doc.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
}

RecordStore::RecordStore(std::vector<RunRecord> records) {
  for (auto& r : records) (r.split == SplitRole::Dev ? dev_ : test_).push_back(std::move(r));
}

std::span<const RunRecord> RecordStore::view(SplitRole role) const {
  const auto& part = role == SplitRole::Dev ? dev_ : test_;
  reads_[static_cast<int>(role)] += part.size();
  return part;
}

std::size_t RecordStore::reads(SplitRole role) const { return reads_[static_cast<int>(role)].load(); }

void RecordStore::reset_reads() const {
  for (auto& r : reads_) r.store(0);
}

}  // namespace essayfb::experiment
