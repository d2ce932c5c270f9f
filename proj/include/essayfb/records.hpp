#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "essayfb/corpus.hpp"
#include "essayfb/extraction.hpp"
#include "essayfb/prompting.hpp"

namespace essayfb::experiment {

enum class SplitRole { Dev, Test };

std::string_view to_string(SplitRole role);
SplitRole parse_split_role(std::string_view name);

/// One (strategy, essay) generation.
struct RunRecord {
  prompting::Strategy strategy;
  int set_id = 0;
  int fold = 0;
  SplitRole split = SplitRole::Test;
  corpus::EssayId essay_id = 0;
  int gold_score = 0;

  std::string prompt_digest;
  std::size_t prompt_chars = 0;
  std::vector<std::size_t> exemplars;
  bool over_budget = false;

  std::string response;
  extraction::ScoreExtraction extraction;
  extraction::FeedbackText feedback;
  std::int64_t latency_ms = 0;
  bool cached = false;

  std::string run_id() const;
};

std::string make_run_id(const prompting::Strategy& s, int set_id, int fold, SplitRole split,
                        corpus::EssayId essay_id);

/// A run that produced no record because the endpoint (or assembly) failed.
struct RunFailure {
  std::string run_id;
  std::string error_kind;
  std::string message;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunFailure& f);

std::vector<RunRecord> load_records(const std::filesystem::path& path);
void save_records(const std::filesystem::path& path, std::span<const RunRecord> records);
void save_failures(const std::filesystem::path& path, std::span<const RunFailure> failures);

/// Appends JSONL lines; each line is written and flushed under a lock.
class RecordWriter {
 public:
  explicit RecordWriter(const std::filesystem::path& path);
  void append(const RunRecord& record);
  void append(const RunFailure& failure);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// Records partitioned by split role. Every record handed out through view()
/// is counted, so callers can prove which split an operation touched.
class RecordStore {
 public:
  explicit RecordStore(std::vector<RunRecord> records);

  std::span<const RunRecord> view(SplitRole role) const;
  std::size_t reads(SplitRole role) const;
  void reset_reads() const;
  std::size_t size() const { return dev_.size() + test_.size(); }

 private:
  std::vector<RunRecord> dev_;
  std::vector<RunRecord> test_;
  mutable std::array<std::atomic<std::size_t>, 2> reads_{};
};

}  // namespace essayfb::experiment
