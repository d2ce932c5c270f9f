#include "support/fixture.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>

namespace fixture {

std::filesystem::path source_dir() { return ESSAYFB_SOURCE_DIR; }
std::filesystem::path data_dir() { return source_dir() / "data" / "fixture"; }
std::filesystem::path golden_dir() { return std::filesystem::path(ESSAYFB_TEST_DIR) / "golden"; }

essayfb::corpus::Corpus load_corpus() {
  return essayfb::corpus::load_corpus(data_dir() / "essays.tsv", data_dir() / "sets", data_dir() / "folds.tsv");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("essayfb-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

essayfb::experiment::RunRecord make_record(const essayfb::prompting::Strategy& strategy, int set_id,
                                           essayfb::experiment::SplitRole split, essayfb::corpus::EssayId essay_id,
                                           int gold, std::optional<int> predicted, std::string feedback) {
  essayfb::experiment::RunRecord r;
  r.strategy = strategy;
  r.set_id = set_id;
  r.split = split;
  r.essay_id = essay_id;
  r.gold_score = gold;
  if (predicted) {
    r.extraction.score = *predicted;
    r.extraction.method = essayfb::extraction::Method::Json;
  }
  r.feedback.text = std::move(feedback);
  r.feedback.empty = r.feedback.text.empty();
  r.feedback.source_run = r.run_id();
  return r;
}

}  // namespace fixture
