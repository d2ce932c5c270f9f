#include "essayfb/annotation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "essayfb/errors.hpp"
#include "essayfb/metrics.hpp"
#include "essayfb/text.hpp"

namespace essayfb::annotation {

using nlohmann::json;
using prompting::InstructionType;
using prompting::Strategy;

void AnnotationRecord::validate() const {
  for (int i = 0; i < kNumStatements; ++i) {
    if (s[i] < kLikertMin || s[i] > kLikertMax) {
      throw ValidationError("s" + std::to_string(i + 1) + " = " + std::to_string(s[i]) + " is outside 1-7");
    }
  }
}

const AnnotationItem* StudyBundle::find_item(std::string_view item_id) const {
  for (const auto& item : items) {
    if (item.item_id == item_id) return &item;
  }
  return nullptr;
}

const AnnotatorGroup* StudyBundle::group_of(std::string_view annotator_id) const {
  for (const auto& g : groups) {
    if (std::find(g.annotator_ids.begin(), g.annotator_ids.end(), annotator_id) != g.annotator_ids.end()) return &g;
  }
  return nullptr;
}

void StudyBundle::validate() const {
  std::set<std::string> item_ids;
  for (const auto& item : items) {
    if (!item_ids.insert(item.item_id).second) throw ValidationError("duplicate item id " + item.item_id);
    if (text::trim(item.feedback).empty()) throw ValidationError("item " + item.item_id + " has empty feedback");
  }
  std::set<std::string> annotators;
  std::set<int> group_ids;
  for (const auto& g : groups) {
    if (!group_ids.insert(g.group_id).second) throw ValidationError("duplicate group " + std::to_string(g.group_id));
    for (const auto& a : g.annotator_ids) {
      if (!annotators.insert(a).second) throw ValidationError("annotator " + a + " is in more than one group");
    }
    for (const auto& id : g.item_ids) {
      if (!item_ids.count(id)) throw ValidationError("group " + std::to_string(g.group_id) + " lists unknown item " + id);
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const AnnotationItem& item) {
  return {{"item_id", item.item_id},
          {"essay_prompt", item.essay_prompt},
          {"essay", item.essay},
          {"feedback", item.feedback},
          {"source_strategy", prompting::to_string(item.source_strategy)},
          {"source_run", item.source_run},
          {"set_id", item.set_id},
          {"essay_id", item.essay_id}};
}

AnnotationItem item_from_json(const json& doc) {
  try {
    AnnotationItem item;
    item.item_id = doc.at("item_id").get<std::string>();
    item.essay_prompt = doc.at("essay_prompt").get<std::string>();
    item.essay = doc.at("essay").get<std::string>();
    item.feedback = doc.at("feedback").get<std::string>();
    item.source_strategy = prompting::parse_instruction_type(doc.at("source_strategy").get<std::string>());
    item.source_run = doc.value("source_run", "");
    item.set_id = doc.value("set_id", 0);
    item.essay_id = doc.value("essay_id", corpus::EssayId{0});
    return item;
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation item: ") + e.what());
  }
}

json annotator_view(const AnnotationItem& item) {
  return {{"item_id", item.item_id}, {"essay_prompt", item.essay_prompt}, {"essay", item.essay}, {"feedback", item.feedback}};
}

json to_json(const AnnotationRecord& record) {
  json doc{{"annotator_id", record.annotator_id}, {"item_id", record.item_id}};
  for (int i = 0; i < kNumStatements; ++i) doc["s" + std::to_string(i + 1)] = record.s[i];
  doc["submitted_at"] = record.submitted_at;
  return doc;
}

AnnotationRecord annotation_from_json(const json& doc) {
  AnnotationRecord record;
  try {
    record.annotator_id = doc.at("annotator_id").get<std::string>();
    record.item_id = doc.at("item_id").get<std::string>();
    for (int i = 0; i < kNumStatements; ++i) {
      const auto& v = doc.at("s" + std::to_string(i + 1));
      if (!v.is_number_integer()) throw ValidationError("s" + std::to_string(i + 1) + " must be an integer");
      record.s[i] = v.get<int>();
    }
    record.submitted_at = doc.value("submitted_at", "");
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation record: ") + e.what());
  }
  return record;
}

json to_json(const ExportRow& row) {
  auto doc = to_json(row.record);
  doc["strategy"] = prompting::to_string(row.strategy);
  doc["source_run"] = row.source_run;
  doc["group_id"] = row.group_id;
  return doc;
}

ExportRow export_row_from_json(const json& doc) {
  ExportRow row;
  row.record = annotation_from_json(doc);
  try {
    row.strategy = prompting::parse_instruction_type(doc.at("strategy").get<std::string>());
    row.source_run = doc.value("source_run", "");
    row.group_id = doc.at("group_id").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("export row: ") + e.what());
  }
  return row;
}

json to_json(const StudyBundle& bundle) {
  json doc{{"items", json::array()}, {"groups", json::array()}};
  for (const auto& item : bundle.items) doc["items"].push_back(to_json(item));
  for (const auto& g : bundle.groups) {
    doc["groups"].push_back({{"group_id", g.group_id}, {"annotator_ids", g.annotator_ids}, {"item_ids", g.item_ids}});
  }
  return doc;
}

StudyBundle bundle_from_json(const json& doc) {
  StudyBundle bundle;
  try {
    for (const auto& item : doc.at("items")) bundle.items.push_back(item_from_json(item));
    for (const auto& g : doc.at("groups")) {
      bundle.groups.push_back({g.at("group_id").get<int>(), g.at("annotator_ids").get<std::vector<std::string>>(),
                               g.at("item_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("study bundle: ") + e.what());
  }
  bundle.validate();
  return bundle;
}

StudyBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  return bundle_from_json(doc);
}

void save_bundle(const std::filesystem::path& path, const StudyBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(bundle).dump(2) << '\n';
}

std::vector<ExportRow> load_export(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<ExportRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": not valid JSON");
    rows.push_back(export_row_from_json(doc));
  }
  return rows;
}

void save_export(const std::filesystem::path& path, std::span<const ExportRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& row : rows) out << to_json(row).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Sampling

std::map<InstructionType, Strategy> best_combinations(std::span<const experiment::RunRecord> records,
                                                      std::span<const judge::HelpfulnessJudgment> judgments,
                                                      std::span<const InstructionType> types) {
  std::map<std::string, const experiment::RunRecord*> by_run;
  for (const auto& r : records) by_run.emplace(r.run_id(), &r);
  std::map<Strategy, std::pair<double, std::size_t>> sums;
  for (const auto& j : judgments) {
    auto it = by_run.find(j.item);
    if (it == by_run.end()) continue;
    const auto& strategy = it->second->strategy;
    if (std::find(types.begin(), types.end(), strategy.instruction) == types.end()) continue;
    auto& [sum, n] = sums[strategy];
    sum += j.score;
    ++n;
  }
  std::map<InstructionType, std::pair<Strategy, double>> best;
  for (const auto& [strategy, acc] : sums) {
    const double mean = acc.first / static_cast<double>(acc.second);
    auto it = best.find(strategy.instruction);
    if (it == best.end() || mean > it->second.second) best[strategy.instruction] = {strategy, mean};
  }
  std::map<InstructionType, Strategy> out;
  for (const auto& [type, pick] : best) out.emplace(type, pick.first);
  return out;
}

std::vector<AnnotationItem> sample_annotation_items(std::span<const experiment::RunRecord> records,
                                                    const corpus::Corpus& corpus, const SamplingOptions& options,
                                                    SeededRng& rng) {
  if (options.strategies.empty()) throw ValidationError("no strategies to sample from");
  if (options.n == 0) throw ValidationError("sample size must be positive");
  const std::size_t k = options.strategies.size();
  std::vector<std::size_t> quota(k, options.n / k);
  for (std::size_t s = 0; s < options.n % k; ++s) ++quota[s];

  std::vector<std::vector<const experiment::RunRecord*>> strata(k);
  for (const auto& r : records) {
    if (r.set_id != options.set_id || r.split != experiment::SplitRole::Test || r.feedback.empty) continue;
    for (std::size_t s = 0; s < k; ++s) {
      if (r.strategy.instruction != options.strategies[s]) continue;
      auto combo = options.combinations.find(options.strategies[s]);
      if (combo != options.combinations.end() && combo->second != r.strategy) continue;
      strata[s].push_back(&r);
    }
  }

  std::string shortfall;
  for (std::size_t s = 0; s < k; ++s) {
    if (strata[s].size() < quota[s]) {
      shortfall += std::string(shortfall.empty() ? "" : "; ") + std::string(prompting::to_string(options.strategies[s])) +
                   ": need " + std::to_string(quota[s]) + ", have " + std::to_string(strata[s].size());
    }
  }
  if (!shortfall.empty()) throw SamplingError("not enough feedback to sample from (" + shortfall + ")");

  for (std::size_t s = 0; s < k; ++s) {
    auto& stratum = strata[s];
    // Fix the order before shuffling so the draw does not depend on input order.
    std::sort(stratum.begin(), stratum.end(),
              [](const auto* a, const auto* b) { return a->run_id() < b->run_id(); });
    rng.shuffle(std::span(stratum));
    stratum.resize(quota[s]);
  }

  const auto& set = corpus.set(options.set_id);
  std::vector<AnnotationItem> items;
  for (std::size_t i = 0; i < quota[0]; ++i) {
    for (std::size_t s = 0; s < k; ++s) {
      if (i >= strata[s].size()) continue;
      const auto* r = strata[s][i];
      char id[32];
      std::snprintf(id, sizeof id, "item-%02zu", items.size() + 1);
      items.push_back({id, set.essay_prompt, corpus.essay(r->essay_id).text, r->feedback.text, r->strategy.instruction,
                       r->run_id(), r->set_id, r->essay_id});
    }
  }
  return items;
}

std::vector<AnnotatorGroup> make_groups(std::span<const AnnotationItem> items,
                                        std::span<const std::string> annotator_ids, std::size_t num_groups) {
  if (num_groups == 0) throw ValidationError("need at least one group");
  if (items.size() % num_groups != 0 || items.empty()) {
    throw ValidationError(std::to_string(items.size()) + " items do not split into " + std::to_string(num_groups) +
                          " equal blocks");
  }
  if (annotator_ids.size() % num_groups != 0 || annotator_ids.empty()) {
    throw ValidationError(std::to_string(annotator_ids.size()) + " annotators do not split into " +
                          std::to_string(num_groups) + " equal groups");
  }
  const std::size_t per_items = items.size() / num_groups;
  const std::size_t per_annotators = annotator_ids.size() / num_groups;
  std::vector<AnnotatorGroup> groups;
  for (std::size_t g = 0; g < num_groups; ++g) {
    AnnotatorGroup group;
    group.group_id = static_cast<int>(g + 1);
    for (std::size_t i = 0; i < per_annotators; ++i) group.annotator_ids.push_back(annotator_ids[g * per_annotators + i]);
    for (std::size_t i = 0; i < per_items; ++i) group.item_ids.push_back(items[g * per_items + i].item_id);
    groups.push_back(std::move(group));
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Store

AnnotationStore::AnnotationStore(StudyBundle bundle, std::filesystem::path log_path)
    : bundle_(std::move(bundle)), log_path_(std::move(log_path)) {
  bundle_.validate();
  if (log_path_.empty() || !std::filesystem::exists(log_path_)) return;
  std::ifstream in(log_path_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      spdlog::warn("{}:{}: skipping unreadable log line", log_path_.string(), line_no);
      continue;
    }
    auto record = annotation_from_json(doc);
    check(record);
    apply(record);
  }
}

void AnnotationStore::check(const AnnotationRecord& record) const {
  const auto* group = bundle_.group_of(record.annotator_id);
  if (!group) throw NotFoundError("unknown annotator '" + record.annotator_id + "'");
  if (std::find(group->item_ids.begin(), group->item_ids.end(), record.item_id) == group->item_ids.end()) {
    throw ValidationError("item '" + record.item_id + "' is not assigned to annotator '" + record.annotator_id + "'");
  }
  record.validate();
}

void AnnotationStore::apply(const AnnotationRecord& record) {
  versions_[{record.annotator_id, record.item_id}].push_back(record);
}

AnnotationRecord AnnotationStore::submit(AnnotationRecord record) {
  check(record);
  if (record.submitted_at.empty()) record.submitted_at = text::utc_timestamp();
  std::lock_guard lock(mutex_);
  if (!log_path_.empty()) {
    std::ofstream out(log_path_, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + log_path_.string());
    out << to_json(record).dump() << '\n';
    out.flush();
    if (!out) throw Error("write to " + log_path_.string() + " failed");
  }
  apply(record);
  return record;
}

std::vector<const AnnotationItem*> AnnotationStore::items_for(std::string_view annotator_id) const {
  const auto* group = bundle_.group_of(annotator_id);
  if (!group) throw NotFoundError("unknown annotator '" + std::string(annotator_id) + "'");
  std::vector<const AnnotationItem*> items;
  for (const auto& id : group->item_ids) items.push_back(bundle_.find_item(id));
  return items;
}

Progress AnnotationStore::progress(std::string_view annotator_id) const {
  const auto items = items_for(annotator_id);
  Progress p{0, items.size()};
  std::lock_guard lock(mutex_);
  for (const auto* item : items) {
    if (versions_.count({std::string(annotator_id), item->item_id})) ++p.completed;
  }
  return p;
}

std::optional<AnnotationRecord> AnnotationStore::current(std::string_view annotator_id,
                                                         std::string_view item_id) const {
  std::lock_guard lock(mutex_);
  auto it = versions_.find({std::string(annotator_id), std::string(item_id)});
  if (it == versions_.end()) return std::nullopt;
  return it->second.back();
}

std::vector<AnnotationRecord> AnnotationStore::history(std::string_view annotator_id, std::string_view item_id) const {
  std::lock_guard lock(mutex_);
  auto it = versions_.find({std::string(annotator_id), std::string(item_id)});
  if (it == versions_.end()) return {};
  return it->second;
}

std::vector<ExportRow> AnnotationStore::export_rows() const {
  std::lock_guard lock(mutex_);
  std::vector<ExportRow> rows;
  for (const auto& [key, versions] : versions_) {
    const auto* item = bundle_.find_item(key.second);
    const auto* group = bundle_.group_of(key.first);
    rows.push_back({versions.back(), item->source_strategy, item->source_run, group->group_id});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Analysis

std::vector<ManualRow> manual_results_table(std::span<const ExportRow> rows) {
  if (rows.empty()) throw ValidationError("export is empty");
  std::vector<ManualRow> out;
  for (auto type : prompting::kAllInstructionTypes) {
    ManualRow row;
    row.strategy = type;
    std::array<std::vector<double>, kNumStatements> values;
    for (const auto& r : rows) {
      if (r.strategy != type) continue;
      for (int i = 0; i < kNumStatements; ++i) values[i].push_back(r.record.s[i]);
    }
    row.n = values[0].size();
    if (row.n == 0) {
      if (std::find(kStudyStrategies.begin(), kStudyStrategies.end(), type) != kStudyStrategies.end()) {
        spdlog::warn("no annotations for {}", prompting::to_string(type));
      }
      continue;
    }
    for (int i = 0; i < kNumStatements; ++i) row.mean[i] = metrics::mean_std(values[i]).mean;
    out.push_back(row);
  }
  return out;
}

CorrelationTable correlate_manual_automatic(std::span<const ExportRow> rows,
                                            std::span<const judge::HelpfulnessJudgment> judgments) {
  if (rows.empty()) throw ValidationError("export is empty");
  // item -> per-statement judgments
  std::map<std::string, std::array<std::vector<double>, kNumStatements>> manual;
  std::map<std::string, std::string> run_of;
  for (const auto& r : rows) {
    for (int i = 0; i < kNumStatements; ++i) manual[r.record.item_id][i].push_back(r.record.s[i]);
    run_of[r.record.item_id] = r.source_run;
  }
  // judge model -> run -> scores
  std::map<std::string, std::map<std::string, std::vector<double>>> automatic;
  for (const auto& j : judgments) automatic[j.judge_model][j.item].push_back(j.score);

  CorrelationTable table;
  table.items = manual.size();
  for (const auto& [model, by_run] : automatic) {
    std::vector<double> auto_scores;
    std::array<std::vector<double>, kNumStatements> manual_means;
    for (const auto& [item, statements] : manual) {
      auto it = by_run.find(run_of[item]);
      if (it == by_run.end()) {
        throw ValidationError("judge model " + model + " has no judgment for " + item + " (" + run_of[item] + ")");
      }
      auto_scores.push_back(metrics::mean_std(it->second).mean);
      for (int i = 0; i < kNumStatements; ++i) manual_means[i].push_back(metrics::mean_std(statements[i]).mean);
    }
    table.judge_models.push_back(model);
    auto& cells = table.cells[model];
    for (int i = 0; i < kNumStatements; ++i) {
      try {
        cells[i] = metrics::pearson(manual_means[i], auto_scores);
      } catch (const MetricError& e) {
        spdlog::warn("{} x S{} undefined: {}", model, i + 1, e.what());
        cells[i] = std::nullopt;
      }
    }
  }
  return table;
}

GroupAlpha group_alpha(std::span<const ExportRow> rows, int statement) {
  if (statement < 1 || statement > kNumStatements) {
    throw ValidationError("statement must be 1-5, got " + std::to_string(statement));
  }
  // group -> annotator -> item -> value
  std::map<int, std::map<std::string, std::map<std::string, double>>> groups;
  for (const auto& r : rows) groups[r.group_id][r.record.annotator_id][r.record.item_id] = r.record.s[statement - 1];

  GroupAlpha out;
  for (const auto& [group_id, annotators] : groups) {
    if (annotators.size() < 2) {
      spdlog::warn("group {} has {} annotator(s); excluded from alpha", group_id, annotators.size());
      continue;
    }
    std::set<std::string> items;
    for (const auto& [_, judged] : annotators) {
      for (const auto& [item, __] : judged) items.insert(item);
    }
    metrics::ReliabilityMatrix m;
    for (const auto& [_, judged] : annotators) {
      std::vector<std::optional<double>> row;
      for (const auto& item : items) {
        auto it = judged.find(item);
        row.push_back(it == judged.end() ? std::nullopt : std::optional<double>(it->second));
      }
      m.rows.push_back(std::move(row));
    }
    try {
      out.per_group.emplace_back(group_id, metrics::krippendorff_alpha_interval(m));
    } catch (const MetricError& e) {
      spdlog::warn("group {} excluded from alpha: {}", group_id, e.what());
    }
  }
  if (out.per_group.empty()) throw MetricError("no group has two annotators with overlapping items");
  std::vector<double> values;
  for (const auto& [_, a] : out.per_group) values.push_back(a);
  out.mean = metrics::mean_std(values).mean;
  return out;
}

report::Table to_report_table(std::span<const ManualRow> rows, std::string name) {
  report::Table t;
  t.name = std::move(name);
  t.title = "Average manual judgments per task instruction type (1-7)";
  t.precision = 2;
  t.columns = {"Task Instruction Type", "S1", "S2", "S3", "S4", "S5", "n"};
  for (const auto& row : rows) {
    std::vector<report::Cell> cells{std::string(prompting::display_name(row.strategy))};
    for (double m : row.mean) cells.emplace_back(m);
    cells.emplace_back(static_cast<long long>(row.n));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

report::Table to_report_table(const CorrelationTable& table, std::string name) {
  report::Table t;
  t.name = std::move(name);
  t.title = "Pearson correlation of manual judgments and automatic helpfulness";
  t.precision = 2;
  t.columns = {"Judge", "S1", "S2", "S3", "S4", "S5"};
  for (const auto& model : table.judge_models) {
    std::vector<report::Cell> cells{model};
    for (const auto& c : table.cells.at(model)) {
      if (c) {
        cells.emplace_back(*c);
      } else {
        cells.emplace_back(std::monostate{});
      }
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

report::Table to_report_table(const GroupAlpha& alpha, int statement, std::string name) {
  report::Table t;
  t.name = std::move(name);
  t.title = "Krippendorff's alpha (interval) on S" + std::to_string(statement);
  t.columns = {"Group", "Alpha"};
  for (const auto& [group, a] : alpha.per_group) t.rows.push_back({std::to_string(group), a});
  t.rows.push_back({std::string("Mean"), alpha.mean});
  return t;
}

}  // namespace essayfb::annotation
