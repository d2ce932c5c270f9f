#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "essayfb/corpus.hpp"
#include "essayfb/records.hpp"

namespace fixture {

std::filesystem::path source_dir();
std::filesystem::path data_dir();  // data/fixture
std::filesystem::path golden_dir();

essayfb::corpus::Corpus load_corpus();
std::string read_file(const std::filesystem::path& path);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

essayfb::experiment::RunRecord make_record(const essayfb::prompting::Strategy& strategy, int set_id,
                                           essayfb::experiment::SplitRole split, essayfb::corpus::EssayId essay_id,
                                           int gold, std::optional<int> predicted,
                                           std::string feedback = "Add more evidence.");

}  // namespace fixture
