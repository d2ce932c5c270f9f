#include "essayfb/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "essayfb/errors.hpp"
#include "essayfb/text.hpp"

namespace essayfb::corpus {

using nlohmann::json;

void ScoreRange::validate() const {
  if (min < 0 || max < 0) {
    throw ValidationError("score range must be non-negative, got " + std::to_string(min) + "-" +
                          std::to_string(max));
  }
  if (min >= max) {
    throw ValidationError("score range min must be below max, got " + std::to_string(min) + "-" +
                          std::to_string(max));
  }
}

void EssaySet::validate() const {
  if (set_id < 1 || set_id > 8) {
    throw ValidationError("set_id must be within 1-8, got " + std::to_string(set_id));
  }
  score_range.validate();
  if (rubric.empty()) {
    throw ValidationError("set " + std::to_string(set_id) + ": rubric is empty");
  }
  std::set<int> seen;
  for (const auto& level : rubric) {
    if (!score_range.contains(level.score)) {
      throw ValidationError("set " + std::to_string(set_id) + ": rubric level score " +
                            std::to_string(level.score) + " outside range " +
                            std::to_string(score_range.min) + "-" + std::to_string(score_range.max));
    }
    if (!seen.insert(level.score).second) {
      throw ValidationError("set " + std::to_string(set_id) + ": rubric lists score " +
                            std::to_string(level.score) + " twice");
    }
  }
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    if (!score_range.contains(exemplars[i].score)) {
      throw ValidationError("set " + std::to_string(set_id) + ": exemplar " + std::to_string(i) +
                            " score " + std::to_string(exemplars[i].score) + " outside range");
    }
  }
}

const std::map<int, ScoreRange>& asap_score_ranges() {
  static const std::map<int, ScoreRange> ranges{
      {1, {2, 12}}, {2, {1, 6}}, {3, {0, 3}}, {4, {0, 3}},
      {5, {0, 4}},  {6, {0, 4}}, {7, {0, 30}}, {8, {0, 60}},
  };
  return ranges;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto end = line.find('\t', start);
    if (end == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return cells;
}

long long parse_integer(std::string_view cell, const std::string& what) {
  auto trimmed = text::trim(cell);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
  if (ec != std::errc() || ptr != trimmed.data() + trimmed.size() || trimmed.empty()) {
    throw FormatError(what + ": expected an integer, got '" + std::string(cell) + "'");
  }
  return value;
}

}  // namespace

std::vector<Essay> parse_essays(std::string_view tsv, const std::map<int, ScoreRange>& ranges) {
  auto lines = split_lines(tsv);
  if (lines.empty()) throw FormatError("essay file is empty (no header)");

  auto header = split_tabs(lines.front());
  auto column = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
    for (auto name : names) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (text::trim(header[i]) == name) return i;
      }
    }
    return std::nullopt;
  };
  auto require = [&](std::initializer_list<std::string_view> names) {
    auto idx = column(names);
    if (!idx) throw FormatError("essay file is missing column '" + std::string(*names.begin()) + "'");
    return *idx;
  };
  const auto id_col = require({"essay_id"});
  const auto set_col = require({"essay_set"});
  const auto text_col = require({"essay"});
  const auto score_col = require({"domain1_score", "score"});
  const auto needed = std::max({id_col, set_col, text_col, score_col}) + 1;

  std::vector<Essay> essays;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    auto cells = split_tabs(lines[row]);
    const std::string where = "line " + std::to_string(row + 1);
    if (cells.size() < needed) {
      throw FormatError(where + ": expected at least " + std::to_string(needed) + " columns, got " +
                        std::to_string(cells.size()));
    }
    Essay essay;
    essay.essay_id = parse_integer(cells[id_col], where + " essay_id");
    essay.set_id = static_cast<int>(parse_integer(cells[set_col], where + " essay_set"));
    essay.text = std::string(cells[text_col]);
    essay.gold_score = static_cast<int>(parse_integer(cells[score_col], where + " score"));

    const std::string who = "essay " + std::to_string(essay.essay_id);
    if (text::trim(essay.text).empty()) throw ValidationError(who + ": empty essay text");
    const ScoreRange* range = nullptr;
    if (auto it = ranges.find(essay.set_id); it != ranges.end()) {
      range = &it->second;
    } else if (auto jt = asap_score_ranges().find(essay.set_id); jt != asap_score_ranges().end()) {
      range = &jt->second;
    } else {
      throw ValidationError(who + ": unknown essay set " + std::to_string(essay.set_id));
    }
    if (!range->contains(essay.gold_score)) {
      throw ValidationError(who + ": score " + std::to_string(essay.gold_score) + " outside range " +
                            std::to_string(range->min) + "-" + std::to_string(range->max));
    }
    essays.push_back(std::move(essay));
  }
  return essays;
}

std::vector<Essay> load_essays(const std::filesystem::path& path,
                               const std::map<int, ScoreRange>& ranges) {
  return parse_essays(read_file(path), ranges);
}

EssaySet parse_set_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("set config is not valid JSON: ") + e.what());
  }
  EssaySet set;
  try {
    set.set_id = doc.at("set_id").get<int>();
    set.essay_prompt = doc.at("essay_prompt").get<std::string>();
    set.score_range.min = doc.at("score_range").at("min").get<int>();
    set.score_range.max = doc.at("score_range").at("max").get<int>();
    for (const auto& level : doc.at("rubric")) {
      RubricLevel parsed;
      parsed.score = level.at("score").get<int>();
      parsed.description = level.at("description").get<std::string>();
      if (level.contains("bullets")) parsed.bullets = level["bullets"].get<std::vector<std::string>>();
      set.rubric.push_back(std::move(parsed));
    }
    if (doc.contains("exemplars")) {
      for (const auto& ex : doc["exemplars"]) {
        set.exemplars.push_back(Exemplar{ex.at("essay").get<std::string>(),
                                         ex.value("reasoning", std::string{}),
                                         ex.at("score").get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("set config: ") + e.what());
  }
  set.validate();
  return set;
}

EssaySet load_set_config(const std::filesystem::path& path) {
  try {
    return parse_set_config(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string set_config_to_json(const EssaySet& set) {
  json doc;
  doc["set_id"] = set.set_id;
  doc["essay_prompt"] = set.essay_prompt;
  doc["score_range"] = {{"min", set.score_range.min}, {"max", set.score_range.max}};
  doc["rubric"] = json::array();
  for (const auto& level : set.rubric) {
    doc["rubric"].push_back(
        {{"score", level.score}, {"description", level.description}, {"bullets", level.bullets}});
  }
  doc["exemplars"] = json::array();
  for (const auto& ex : set.exemplars) {
    doc["exemplars"].push_back(
        {{"essay", ex.essay_text}, {"reasoning", ex.reasoning}, {"score", ex.score}});
  }
  return doc.dump(2);
}

std::map<int, EssaySet> load_set_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<int, EssaySet> sets;
  for (const auto& file : files) {
    auto set = load_set_config(file);
    const int id = set.set_id;
    if (!sets.emplace(id, std::move(set)).second) {
      throw ValidationError(file.string() + ": duplicate set_id " + std::to_string(id));
    }
  }
  return sets;
}

std::map<EssayId, int> parse_fold_map(std::string_view text_in) {
  std::map<EssayId, int> folds;
  auto lines = split_lines(text_in);
  for (std::size_t row = 0; row < lines.size(); ++row) {
    auto line = text::trim(lines[row]);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_tabs(line);
    if (cells.size() < 2) {
      // Also accept comma-separated pairs.
      auto comma = line.find(',');
      if (comma == std::string_view::npos) {
        throw FormatError("fold map line " + std::to_string(row + 1) + ": expected two columns");
      }
      cells = {line.substr(0, comma), line.substr(comma + 1)};
    }
    if (row == 0 && !text::trim(cells[0]).empty() &&
        !std::isdigit(static_cast<unsigned char>(text::trim(cells[0]).front()))) {
      continue;  // header
    }
    const std::string where = "fold map line " + std::to_string(row + 1);
    auto id = parse_integer(cells[0], where);
    auto fold = static_cast<int>(parse_integer(cells[1], where));
    if (!folds.emplace(id, fold).second) {
      throw FormatError(where + ": essay " + std::to_string(id) + " listed twice");
    }
  }
  return folds;
}

std::map<EssayId, int> load_fold_map(const std::filesystem::path& path) {
  return parse_fold_map(read_file(path));
}

std::vector<FoldSplit> assign_folds(std::span<const Essay> essays,
                                    const std::map<EssayId, int>& fold_map) {
  std::vector<EssayId> missing;
  for (const auto& essay : essays) {
    if (!fold_map.contains(essay.essay_id)) missing.push_back(essay.essay_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i == 20) {
        ids += ", ... (" + std::to_string(missing.size()) + " total)";
        break;
      }
      ids += (i ? ", " : "") + std::to_string(missing[i]);
    }
    throw ValidationError("essays missing from fold map: " + ids);
  }

  std::vector<FoldSplit> splits(kNumFolds);
  for (int k = 0; k < kNumFolds; ++k) splits[k].fold_index = k;
  for (const auto& essay : essays) {
    const int fold = fold_map.at(essay.essay_id);
    if (fold < 0 || fold >= kNumFolds) {
      throw ValidationError("essay " + std::to_string(essay.essay_id) + ": fold index " +
                            std::to_string(fold) + " outside 0-4");
    }
    for (int k = 0; k < kNumFolds; ++k) {
      if (fold == k) {
        splits[k].test_ids.insert(essay.essay_id);
      } else if (fold == (k + 1) % kNumFolds) {
        splits[k].dev_ids.insert(essay.essay_id);
      } else {
        splits[k].train_ids.insert(essay.essay_id);
      }
    }
  }
  return splits;
}

const Essay& Corpus::essay(EssayId id) const {
  auto it = index_.find(id);
  if (it == index_.end() || it->second >= essays.size() || essays[it->second].essay_id != id) {
    throw ValidationError("unknown essay id " + std::to_string(id));
  }
  return essays[it->second];
}

const EssaySet& Corpus::set(int set_id) const {
  auto it = sets.find(set_id);
  if (it == sets.end()) throw ValidationError("no configuration for essay set " + std::to_string(set_id));
  return it->second;
}

void Corpus::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < essays.size(); ++i) {
    if (!index_.emplace(essays[i].essay_id, i).second) {
      throw ValidationError("duplicate essay id " + std::to_string(essays[i].essay_id));
    }
  }
}

Corpus load_corpus(const std::filesystem::path& essays_tsv, const std::filesystem::path& sets_dir,
                   const std::filesystem::path& fold_map) {
  Corpus corpus;
  corpus.sets = load_set_directory(sets_dir);
  std::map<int, ScoreRange> ranges;
  for (const auto& [id, set] : corpus.sets) ranges[id] = set.score_range;
  corpus.essays = load_essays(essays_tsv, ranges);
  corpus.folds = assign_folds(corpus.essays, load_fold_map(fold_map));
  corpus.reindex();
  return corpus;
}

}  // namespace essayfb::corpus
