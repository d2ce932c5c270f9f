#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace essayfb::corpus {

using EssayId = std::int64_t;

struct ScoreRange {
  int min = 0;
  int max = 0;

  bool contains(int score) const { return score >= min && score <= max; }
  int size() const { return max - min + 1; }
  // Throws ValidationError unless 0 <= min < max.
  void validate() const;
  bool operator==(const ScoreRange&) const = default;
};

struct RubricLevel {
  int score = 0;
  std::string description;
  std::vector<std::string> bullets;
};

struct Exemplar {
  std::string essay_text;
  std::string reasoning;
  int score = 0;
};

struct EssaySet {
  int set_id = 0;
  std::string essay_prompt;
  ScoreRange score_range;
  std::vector<RubricLevel> rubric;
  std::vector<Exemplar> exemplars;

  void validate() const;
};

struct Essay {
  EssayId essay_id = 0;
  int set_id = 0;
  std::string text;
  int gold_score = 0;
};

struct FoldSplit {
  int fold_index = 0;
  std::set<EssayId> train_ids;
  std::set<EssayId> dev_ids;
  std::set<EssayId> test_ids;
};

inline constexpr int kNumFolds = 5;

/// Domain-1 score ranges of the eight ASAP essay sets.
const std::map<int, ScoreRange>& asap_score_ranges();

/// Reads an ASAP-layout tab-separated file. Required columns are `essay_id`,
/// `essay_set`, `essay` and the resolved score (`domain1_score`, or `score`).
/// Scores are validated against `ranges`, falling back to the ASAP defaults
/// for sets that are not listed.
std::vector<Essay> load_essays(const std::filesystem::path& path,
                               const std::map<int, ScoreRange>& ranges = {});
std::vector<Essay> parse_essays(std::string_view tsv, const std::map<int, ScoreRange>& ranges = {});

EssaySet load_set_config(const std::filesystem::path& path);
EssaySet parse_set_config(std::string_view json_text);
std::string set_config_to_json(const EssaySet& set);

/// Loads every `*.json` set config in a directory, keyed by set id.
std::map<int, EssaySet> load_set_directory(const std::filesystem::path& dir);

/// Reads `essay_id<TAB>fold` lines; a header line is optional.
std::map<EssayId, int> load_fold_map(const std::filesystem::path& path);
std::map<EssayId, int> parse_fold_map(std::string_view text);

/// Builds the five splits. Fold k tests on essays mapped to k, develops on
/// essays mapped to (k + 1) mod 5 and trains on the rest.
std::vector<FoldSplit> assign_folds(std::span<const Essay> essays,
                                    const std::map<EssayId, int>& fold_map);

/// Everything a grid run needs about the data.
struct Corpus {
  std::vector<Essay> essays;
  std::map<int, EssaySet> sets;
  std::vector<FoldSplit> folds;

  const Essay& essay(EssayId id) const;
  const EssaySet& set(int set_id) const;
  // Rebuilds the id lookup after `essays` changes.
  void reindex();

 private:
  std::map<EssayId, std::size_t> index_;
};

Corpus load_corpus(const std::filesystem::path& essays_tsv, const std::filesystem::path& sets_dir,
                   const std::filesystem::path& fold_map);

}  // namespace essayfb::corpus
