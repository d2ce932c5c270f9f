// Acceptance run: one PASS/FAIL line per criterion. Expected values come
// from the brute-force oracles in tests/support, never from the library.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "essayfb/annotation.hpp"
#include "essayfb/annotation_service.hpp"
#include "essayfb/errors.hpp"
#include "essayfb/experiment.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/metrics.hpp"
#include "essayfb/scripted_model.hpp"
#include "essayfb/text.hpp"
#include "support/extraction_cases.hpp"
#include "support/fixture.hpp"
#include "support/oracles.hpp"

using namespace essayfb;
using experiment::Facet;
using experiment::RunRecord;
using experiment::SplitRole;
using prompting::InstructionType;
using prompting::ShotMode;
using prompting::Strategy;

namespace {

constexpr double kTol = 1e-12;
constexpr std::string_view kTemplateSha256 = "41efe9f88debf095e4e2d64245dcd39f1c63d39f270cdfec183251100fb45d30";

// Collects the first few problems of one criterion.
class Failures {
 public:
  void add(const std::string& what) {
    if (count_++ < 5) text_ += (text_.empty() ? "" : "; ") + what;
  }
  void expect(bool ok, const std::string& what) {
    if (!ok) add(what);
  }
  void near(double got, double want, const std::string& what) {
    if (!(std::abs(got - want) <= kTol)) {
      std::ostringstream out;
      out.precision(17);
      out << what << ": got " << got << ", want " << want;
      add(out.str());
    }
  }
  bool ok() const { return count_ == 0; }
  std::string summary() const {
    return count_ <= 5 ? text_ : text_ + " (+" + std::to_string(count_ - 5) + " more)";
  }

 private:
  std::size_t count_ = 0;
  std::string text_;
};

const corpus::Corpus& fixture_corpus() {
  static const auto corpus = fixture::load_corpus();
  return corpus;
}

experiment::ExperimentPlan zero_shot_plan() {
  auto plan = experiment::ExperimentPlan::full();
  plan.shot_modes = {ShotMode::Zero};
  plan.seed = 7;
  plan.workers = 8;
  return plan;
}

metrics::RatingVector rv(const std::vector<int>& v, int lo, int hi) { return {v, lo, hi}; }

// ---------------------------------------------------------------------------

void metrics_oracles(Failures& f) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const int lo = static_cast<int>(gen() % 3);
    const int hi = lo + 1 + static_cast<int>(gen() % 12);
    const std::size_t n = 2 + gen() % 49;
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = lo + static_cast<int>(gen() % (hi - lo + 1));
      b[i] = lo + static_cast<int>(gen() % (hi - lo + 1));
    }
    f.near(metrics::qwk(rv(a, lo, hi), rv(b, lo, hi)), oracle::qwk(a, b), "qwk trial " + std::to_string(trial));

    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(gen);
      y[i] = 0.5 * x[i] + u(gen);
    }
    f.near(metrics::pearson(x, y), oracle::pearson(x, y), "pearson trial " + std::to_string(trial));

    const auto ms = metrics::mean_std(x);
    const auto [m, s] = oracle::mean_std(x);
    f.near(ms.mean, m, "mean trial " + std::to_string(trial));
    f.near(ms.std, s, "std trial " + std::to_string(trial));
  }
  int alpha_checked = 0;
  for (int trial = 0; alpha_checked < 150 && trial < 1000; ++trial) {
    const std::size_t rows = 2 + gen() % 5;
    const std::size_t cols = 1 + gen() % 12;
    metrics::ReliabilityMatrix m;
    m.rows.assign(rows, std::vector<std::optional<double>>(cols));
    for (auto& row : m.rows) {
      for (auto& cell : row) {
        if (gen() % 6 != 0) cell = 1.0 + static_cast<double>(gen() % 7);
      }
    }
    double got = 0;
    try {
      got = metrics::krippendorff_alpha_interval(m);
    } catch (const MetricError&) {
      continue;
    }
    f.near(got, oracle::alpha_interval(m.rows), "alpha trial " + std::to_string(trial));
    ++alpha_checked;
  }
  f.expect(alpha_checked >= 100, "only " + std::to_string(alpha_checked) + " alpha instances");
  const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  f.expect(seconds < 10.0, "took " + std::to_string(seconds) + " s");
}

void qwk_sanity(Failures& f) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int hi = 1 + static_cast<int>(gen() % 12);
    const std::size_t n = 2 + gen() % 48;
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(gen() % (hi + 1));
      b[i] = static_cast<int>(gen() % (hi + 1));
    }
    const auto t = std::to_string(trial);
    f.expect(metrics::qwk(rv(a, 0, hi), rv(a, 0, hi)) == 1.0, "identity trial " + t);
    const double k = metrics::qwk(rv(a, 0, hi), rv(b, 0, hi));
    f.expect(k == metrics::qwk(rv(b, 0, hi), rv(a, 0, hi)), "argument symmetry trial " + t);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<int> pa(n), pb(n), ra(n), rb(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a[order[i]];
      pb[i] = b[order[i]];
      ra[i] = hi - a[i];
      rb[i] = hi - b[i];
    }
    f.expect(k == metrics::qwk(rv(pa, 0, hi), rv(pb, 0, hi)), "item permutation trial " + t);
    f.expect(k == metrics::qwk(rv(ra, 0, hi), rv(rb, 0, hi)), "label reversal trial " + t);
  }
}

void prompt_goldens(Failures& f) {
  const auto& corpus = fixture_corpus();
  f.expect(text::sha256_hex(fixture::read_file(fixture::source_dir() / "data" / "prompt_templates.json")) ==
               kTemplateSha256,
           "template data checksum changed");
  f.expect(prompting::builtin_template_data() == fixture::read_file(fixture::source_dir() / "data" / "prompt_templates.json"),
           "compiled-in template data differs from the data file");

  struct Golden {
    Strategy strategy;
    corpus::EssayId essay;
    const char* file;
  };
  const Golden goldens[] = {
      {{prompting::PatternKind::Base, InstructionType::Scoring, 1, ShotMode::Zero}, 1001, "base_scoring1_zero.txt"},
      {{prompting::PatternKind::EducationalResearcher, InstructionType::Feedback, 1, ShotMode::One}, 3001,
       "er_feedback1_one.txt"},
  };
  for (const auto& g : goldens) {
    const auto& essay = corpus.essay(g.essay);
    SeededRng rng(mix_seed(7, static_cast<std::uint64_t>(essay.set_id), static_cast<std::uint64_t>(essay.essay_id)));
    const auto prompt = prompting::assemble(g.strategy, corpus.set(essay.set_id), essay, rng);
    f.expect(prompt.text == fixture::read_file(fixture::golden_dir() / g.file), std::string(g.file) + " differs");
  }
}

void grid_cardinality(Failures& f) {
  const auto grid = prompting::zero_shot_grid();
  std::set<Strategy> distinct(grid.begin(), grid.end());
  f.expect(grid.size() == 128 && distinct.size() == 128,
           "zero-shot grid has " + std::to_string(grid.size()) + " / " + std::to_string(distinct.size()) + " distinct");

  const auto& corpus = fixture_corpus();
  auto plan = zero_shot_plan();
  plan.sets = {1, 2};
  const auto essays = experiment::plan_essays(plan, corpus, SplitRole::Test);
  f.expect(essays.size() == 10, "fixture slice has " + std::to_string(essays.size()) + " essays");
  llm::ScriptedModel model(corpus, plan.seed);
  llm::ScriptedGenerator gen(model);
  const auto result = experiment::run_grid(plan, corpus, SplitRole::Test, gen);
  f.expect(result.records.size() == 1280, "run_grid emitted " + std::to_string(result.records.size()) + " records");
  f.expect(result.failures.empty(), std::to_string(result.failures.size()) + " failures");
  std::set<std::string> ids;
  for (const auto& r : result.records) ids.insert(r.run_id());
  f.expect(ids.size() == result.records.size(), "run ids are not unique");
}

void budget_property(Failures& f) {
  using namespace prompting;
  std::mt19937_64 gen(5120);
  const auto& lib = TemplateLibrary::builtin();
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = std::to_string(trial);
    corpus::EssaySet set;
    set.set_id = 1;
    set.essay_prompt = std::string(50 + gen() % 600, 'p');
    set.score_range = {0, static_cast<int>(3 + gen() % 58)};
    set.rubric = {{set.score_range.max, "Top.", {"Clear"}}, {0, "Bottom.", {}}};
    const std::size_t pool = 1 + gen() % 10;
    for (std::size_t i = 0; i < pool; ++i) {
      set.exemplars.push_back({std::string(40 + gen() % 1500, 'e'), std::string(10 + gen() % 300, 'r'),
                               static_cast<int>(gen() % (set.score_range.max + 1))});
    }
    corpus::Essay essay{1, 1, std::string(100 + gen() % 1800, 's'), 0};
    const Strategy s{kAllPatterns[gen() % 4], kAllInstructionTypes[gen() % 8], 1 + static_cast<int>(gen() % 4),
                     ShotMode::Few};
    SeededRng rng(gen());
    const auto prompt = assemble(s, set, essay, rng);
    const auto& sel = prompt.meta.exemplar_indices;

    // Greedy-rule oracle over the rendered prompt length.
    const auto instruction = render_instruction(lib.instruction(s.instruction, s.paraphrase), set);
    auto measure = [&](const std::vector<std::size_t>& chosen) {
      return text::utf8_length(render_pattern_with_examples(lib.pattern(s.pattern), set.essay_prompt, instruction,
                                                            essay.text, format_exemplar_section(set.exemplars, chosen)));
    };
    const bool base_fits = measure({}) <= kDefaultFewShotBudget;
    if (base_fits) {
      f.expect(prompt.meta.character_count <= kDefaultFewShotBudget, "trial " + t + " over budget");
    } else {
      f.expect(sel.empty() && prompt.meta.over_budget, "trial " + t + " should be flagged over budget");
    }
    f.expect(prompt.meta.character_count == text::utf8_length(prompt.text), "trial " + t + " count mismatch");

    int max_score = -1, min_score = 1 << 30;
    for (const auto& e : set.exemplars) {
      max_score = std::max(max_score, e.score);
      min_score = std::min(min_score, e.score);
    }
    bool max_fits = false;
    for (std::size_t i = 0; i < pool; ++i) {
      max_fits |= set.exemplars[i].score == max_score && measure({i}) <= kDefaultFewShotBudget;
    }
    if (max_fits) {
      f.expect(!sel.empty() && set.exemplars[sel[0]].score == max_score, "trial " + t + " first is not pool-max");
      bool min_fits = false;
      for (std::size_t i = 0; !sel.empty() && i < pool; ++i) {
        min_fits |= i != sel[0] && set.exemplars[i].score == min_score &&
                    measure({sel[0], i}) <= kDefaultFewShotBudget;
      }
      if (min_fits && min_score != max_score) {
        f.expect(sel.size() >= 2 && set.exemplars[sel[1]].score == min_score, "trial " + t + " second is not pool-min");
      }
    }
    std::set<std::size_t> used(sel.begin(), sel.end());
    f.expect(used.size() == sel.size(), "trial " + t + " repeats an exemplar");
    for (std::size_t i = 0; i < pool; ++i) {
      if (used.count(i)) continue;
      auto extended = sel;
      extended.push_back(i);
      f.expect(measure(extended) > kDefaultFewShotBudget, "trial " + t + " left out an exemplar that fits");
    }
  }
}

void extraction_suite(Failures& f) {
  const auto& cases = fixture::extraction_cases();
  f.expect(cases.size() >= 20, "only " + std::to_string(cases.size()) + " fixtures");
  std::vector<extraction::ScoreExtraction> batch;
  std::set<extraction::Method> methods;
  for (const auto& c : cases) {
    const auto e = extraction::extract_score(c.response, c.range);
    f.expect(e.score == c.score && e.method == c.method, std::string(c.name) + " extracted wrongly");
    methods.insert(e.method);
    batch.push_back(e);
  }
  // Score in prose, recovered by a scripted re-prompt.
  int calls = 0;
  const auto reprompted = extraction::extract_with_reprompt(
      "I would give this essay a 3 overall.", {1, 6}, [&](const std::string& prompt) {
        ++calls;
        return prompt.find("a 3 overall") != std::string::npos ? std::string(R"({"score": 3})")
                                                                  : std::string(R"({"score": null})");
      });
  f.expect(calls == 1 && reprompted.score == 3 && reprompted.method == extraction::Method::Reprompt,
           "prose score was not recovered by the re-prompt");
  batch.push_back(reprompted);
  const auto failed = extraction::extract_with_reprompt("No score anywhere.", {1, 6},
                                                        [](const std::string&) { return std::string("{\"score\": null}"); });
  f.expect(!failed.scored(), "null re-prompt produced a score");
  batch.push_back(failed);

  for (std::size_t size = 1; size <= batch.size(); ++size) {
    const auto t = extraction::tally(std::span(batch).first(size));
    f.expect(t.scored + t.unscored == size, "tally identity fails at batch size " + std::to_string(size));
  }
  f.expect(methods.count(extraction::Method::Json) && methods.count(extraction::Method::Pattern) &&
               methods.count(extraction::Method::Unscored),
           "fixtures do not cover every tier");
}

// Per facet value: per-set cells and mean, from predetermined scores.
struct OracleRow {
  std::map<int, double> cells;
  std::optional<double> mean;
};

std::map<int, OracleRow> oracle_table(const llm::ScriptedModel& model, const std::vector<Strategy>& strategies,
                                      const std::vector<std::pair<int, const corpus::Essay*>>& essays, Facet facet,
                                      const std::vector<int>& sets) {
  auto value = [&](const Strategy& s) {
    return facet == Facet::Pattern ? static_cast<int>(s.pattern) : static_cast<int>(s.instruction);
  };
  std::map<int, std::map<int, std::vector<double>>> per_set;  // facet -> set -> strategy QWKs
  std::set<int> values;
  for (const auto& s : strategies) {
    values.insert(value(s));
    std::map<int, std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (const auto& [fold, essay] : essays) {
      const auto outcome = model.outcome(s, *essay);
      if (!outcome.score) continue;
      pairs[essay->set_id].first.push_back(essay->gold_score);
      pairs[essay->set_id].second.push_back(*outcome.score);
    }
    for (const auto& [set, gp] : pairs) {
      if (gp.first.size() >= 2) per_set[value(s)][set].push_back(oracle::qwk(gp.first, gp.second));
    }
  }
  std::map<int, OracleRow> out;
  for (int v : values) {
    auto& row = out[v];
    std::vector<double> means;
    for (int set : sets) {
      auto it = per_set[v].find(set);
      if (it == per_set[v].end()) continue;
      row.cells[set] = oracle::mean_std(it->second).first;
      means.push_back(row.cells[set]);
    }
    if (!means.empty()) row.mean = oracle::mean_std(means).first;
  }
  return out;
}

void compare_table(Failures& f, const experiment::ResultsTable& got, const std::map<int, OracleRow>& want,
                   const std::string& name) {
  if (got.rows.size() != want.size()) {
    f.add(name + ": " + std::to_string(got.rows.size()) + " rows, want " + std::to_string(want.size()));
    return;
  }
  std::size_t i = 0;
  for (const auto& [value, row] : want) {
    const auto& g = got.rows[i++];
    for (int set : got.sets) {
      auto it = row.cells.find(set);
      const auto& cell = g.per_set.at(set);
      if (it == row.cells.end()) {
        f.expect(!cell, name + " " + g.label + " set " + std::to_string(set) + " should be empty");
      } else if (!cell) {
        f.add(name + " " + g.label + " set " + std::to_string(set) + " is empty");
      } else {
        f.near(*cell, it->second, name + " " + g.label + " set " + std::to_string(set));
      }
    }
    f.expect(g.mean.has_value() == row.mean.has_value(), name + " " + g.label + " mean presence");
    if (g.mean && row.mean) f.near(*g.mean, *row.mean, name + " " + g.label + " mean");
  }
}

void mock_end_to_end(Failures& f) {
  const auto start = std::chrono::steady_clock::now();
  const auto& corpus = fixture_corpus();
  const auto plan = zero_shot_plan();
  llm::ScriptedModel model(corpus, plan.seed);
  llm::MockEndpoint mock(model.responder());
  fixture::TempDir cache_dir;

  auto endpoint = plan.endpoint;
  endpoint.base_url = mock.base_url();
  endpoint.model_name = "scripted-mock";
  auto run = [&] {
    llm::ClientGenerator gen(llm::ChatClient(endpoint, nullptr, llm::RetryPolicy::immediate()),
                             std::make_shared<llm::ResponseCache>(cache_dir.path()));
    return experiment::run_grid(plan, corpus, SplitRole::Test, gen);
  };

  const auto cold = run();
  f.expect(cold.failures.empty(), std::to_string(cold.failures.size()) + " failed runs");
  f.expect(cold.records.size() == 128 * 40, std::to_string(cold.records.size()) + " records");
  f.expect(mock.calls() > 0, "cold run made no calls");

  const auto essays = experiment::plan_essays(plan, corpus, SplitRole::Test);
  for (const auto& r : cold.records) {
    const auto want = model.outcome(r.strategy, corpus.essay(r.essay_id)).score;
    f.expect(r.extraction.score == want, r.run_id() + " extracted the wrong score");
  }

  const std::vector<int> sets{1, 2, 3, 4, 5, 6, 7, 8};
  const experiment::RecordStore store(cold.records);
  std::vector<experiment::ResultsTable> tables;
  for (auto facet : {Facet::Pattern, Facet::InstructionType}) {
    const auto got = experiment::score_table(store, facet, experiment::Aggregation::MeanOverInstructions, {}, sets);
    compare_table(f, got, oracle_table(model, plan.strategies(), essays, facet, sets),
                  std::string(experiment::to_string(facet)));
    tables.push_back(got);
  }

  mock.reset_counters();
  const auto warm = run();
  f.expect(mock.calls() == 0, "warm replay made " + std::to_string(mock.calls()) + " network calls");
  f.expect(warm.records.size() == cold.records.size(), "warm replay record count differs");
  const experiment::RecordStore warm_store(warm.records);
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const auto again = experiment::score_table(warm_store, tables[k].facet,
                                               experiment::Aggregation::MeanOverInstructions, {}, sets);
    for (std::size_t i = 0; i < again.rows.size() && i < tables[k].rows.size(); ++i) {
      f.expect(again.rows[i].per_set == tables[k].rows[i].per_set && again.rows[i].mean == tables[k].rows[i].mean,
               "warm replay changed row " + again.rows[i].label);
    }
  }
  const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  f.expect(seconds < 60.0, "took " + std::to_string(seconds) + " s");
}

void dev_test_hygiene(Failures& f) {
  const auto& corpus = fixture_corpus();
  auto plan = zero_shot_plan();
  plan.paraphrases = {1, 2};
  llm::ScriptedModel model(corpus, plan.seed);
  llm::ScriptedGenerator gen(model);
  auto records = experiment::run_grid(plan, corpus, SplitRole::Dev, gen).records;
  auto test = experiment::run_grid(plan, corpus, SplitRole::Test, gen).records;
  records.insert(records.end(), test.begin(), test.end());
  const experiment::RecordStore store(std::move(records));
  f.expect(store.view(SplitRole::Dev).size() > 0 && store.view(SplitRole::Test).size() > 0, "store is missing a split");

  for (auto facet : {Facet::Pattern, Facet::InstructionType}) {
    for (int value = 0; value < (facet == Facet::Pattern ? 4 : 8); ++value) {
      if (facet == Facet::InstructionType && value == static_cast<int>(InstructionType::Feedback)) continue;
      store.reset_reads();
      experiment::select_best_on_dev(
          store,
          [&](const Strategy& s) {
            return (facet == Facet::Pattern ? static_cast<int>(s.pattern) : static_cast<int>(s.instruction)) == value;
          },
          {});
      f.expect(store.reads(SplitRole::Test) == 0, "select_best_on_dev read " +
                                                      std::to_string(store.reads(SplitRole::Test)) + " test records");
      f.expect(store.reads(SplitRole::Dev) > 0, "select_best_on_dev did not read the dev view");
    }
  }
}

void judge_suite(Failures& f) {
  constexpr std::string_view anchor =
      "You are given an essay and feedback from a teacher for this essay. Your task is to evaluate the helpfulness "
      "of the feedback.";
  constexpr std::string_view task =
      "Evaluate the helpfulness of the feedback. Helpful feedback should explain what the errors are, why they are "
      "errors, and how to fix them. Give a score between 1 and 10, where 1 means the feedback is not helpful at "
      "all, and 10 means the feedback is very helpful.";
  const auto prompt = judge::build_judge_prompt("An essay.", "Some feedback.");
  f.expect(prompt.find(anchor) != std::string::npos, "judge prompt lacks the instruction");
  f.expect(prompt.find(task) != std::string::npos, "judge prompt lacks the task block");

  const auto& corpus = fixture_corpus();
  auto plan = zero_shot_plan();
  plan.paraphrases = {1};
  plan.instruction_types = {InstructionType::Feedback, InstructionType::FeedbackThenScoring};
  llm::ScriptedModel model(corpus, plan.seed);
  llm::ScriptedGenerator gen(model, "scripted-judge");
  const auto records = experiment::run_grid(plan, corpus, SplitRole::Test, gen).records;

  std::vector<judge::HelpfulnessJudgment> judgments;
  std::map<int, std::map<Strategy, std::vector<double>>> expected;  // pattern -> strategy -> scores
  std::map<int, std::vector<double>> flat;                          // pattern -> scores
  for (const auto& r : records) {
    if (r.feedback.empty) continue;
    const auto j = judge::judge(corpus.essay(r.essay_id).text, r.feedback.text, gen, r.run_id());
    const int want = model.helpfulness(r.feedback.text);
    f.expect(j.score == want, r.run_id() + " judged " + std::to_string(j.score));
    judgments.push_back(j);
    expected[static_cast<int>(r.strategy.pattern)][r.strategy].push_back(want);
    flat[static_cast<int>(r.strategy.pattern)].push_back(want);
  }
  // Out-of-range scores must never reach an aggregate.
  for (int bad : {0, -3, 11, 99}) {
    judgments.push_back({records.front().run_id(), "scripted-judge", bad, "", false, ""});
  }

  const auto table = experiment::helpfulness_table(records, judgments, Facet::Pattern);
  f.expect(table.rows.size() == expected.size(), "helpfulness table has the wrong row count");
  std::size_t i = 0;
  for (const auto& [pattern, per_strategy] : expected) {
    if (i >= table.rows.size()) break;
    std::vector<double> means;
    std::size_t n = 0;
    for (const auto& [s, scores] : per_strategy) {
      means.push_back(oracle::mean_std(scores).first);
      n += scores.size();
    }
    const auto [m, sd] = oracle::mean_std(means);
    const auto& cell = table.rows[i++].by_model.at("scripted-judge");
    if (!cell) {
      f.add("missing helpfulness cell");
      continue;
    }
    f.near(cell->mean, m, "helpfulness mean");
    f.near(cell->std, sd, "helpfulness std");
    f.expect(cell->n == n, "helpfulness n counts out-of-range judgments");
  }

  std::vector<std::pair<std::string, std::vector<judge::HelpfulnessJudgment>>> groups;
  for (const auto& [pattern, scores] : flat) {
    std::vector<judge::HelpfulnessJudgment> js;
    for (double s : scores) js.push_back({"x", "m", static_cast<int>(s), "", false, ""});
    js.push_back({"x", "m", 0, "", false, ""});
    js.push_back({"x", "m", 12, "", false, ""});
    groups.emplace_back(std::to_string(pattern), js);
  }
  groups.emplace_back("only-invalid", std::vector<judge::HelpfulnessJudgment>{{"x", "m", 42, "", false, ""}});
  const auto rows = judge::aggregate_helpfulness(groups);
  f.expect(rows.size() == flat.size(), "a facet with only invalid judgments was kept");
  std::size_t k = 0;
  for (const auto& [pattern, scores] : flat) {
    if (k >= rows.size()) break;
    const auto [m, sd] = oracle::mean_std(scores);
    f.near(rows[k].mean, m, "aggregate mean");
    f.near(rows[k].std, sd, "aggregate std");
    f.expect(rows[k].n == scores.size(), "aggregate n includes invalid scores");
    ++k;
  }
}

void annotation_round_trip(Failures& f) {
  const auto& corpus = fixture_corpus();
  auto plan = zero_shot_plan();
  plan.sets = {4};
  plan.instruction_types.assign(annotation::kStudyStrategies.begin(), annotation::kStudyStrategies.end());
  llm::ScriptedModel model(corpus, plan.seed);
  llm::ScriptedGenerator gen(model, "scripted-judge");
  const auto records = experiment::run_grid(plan, corpus, SplitRole::Test, gen).records;

  SeededRng rng(2024);
  annotation::StudyBundle bundle;
  bundle.items = annotation::sample_annotation_items(records, corpus, {}, rng);
  std::vector<std::string> annotators;
  for (int i = 1; i <= 12; ++i) annotators.push_back("annotator-" + std::to_string(i));
  bundle.groups = annotation::make_groups(bundle.items, annotators, 4);

  fixture::TempDir dir;
  annotation::AnnotationStore store(bundle, dir.path() / "annotations.jsonl");
  annotation::AnnotationServer server(store, {"127.0.0.1", 0, "admin-token", {}});
  httplib::Client client("127.0.0.1", server.port());

  // Answers are seeded; the oracle keeps its own copy.
  std::mt19937_64 gen_answers(12);
  std::map<std::pair<std::string, std::string>, std::array<int, 5>> answers;
  for (const auto& group : bundle.groups) {
    for (const auto& annotator : group.annotator_ids) {
      auto res = client.Get("/api/annotators/" + annotator + "/items");
      if (!res || res->status != 200) {
        f.add("items for " + annotator + " unavailable");
        continue;
      }
      for (const auto& item : bundle.items) {
        if (res->body.find(item.source_run) != std::string::npos ||
            res->body.find("\"" + std::string(prompting::to_string(item.source_strategy)) + "\"") != std::string::npos) {
          f.add("item view leaks the source strategy");
        }
      }
      const auto listing = nlohmann::json::parse(res->body);
      f.expect(listing["items"].size() == 6, annotator + " sees " + std::to_string(listing["items"].size()) + " items");
      for (const auto& view : listing["items"]) {
        const std::string item_id = view["item_id"];
        std::array<int, 5> s{};
        for (auto& v : s) v = 1 + static_cast<int>(gen_answers() % 7);
        nlohmann::json body{{"annotator_id", annotator}, {"item_id", item_id}};
        for (int k = 0; k < 5; ++k) body["s" + std::to_string(k + 1)] = s[k];
        auto post = client.Post("/api/annotations", body.dump(), "application/json");
        f.expect(post && post->status == 201, "submission rejected for " + annotator);
        answers[{annotator, item_id}] = s;
      }
    }
  }
  nlohmann::json bad{{"annotator_id", annotators[0]}, {"item_id", bundle.groups[0].item_ids[0]},
                     {"s1", 4}, {"s2", 4}, {"s3", 9}, {"s4", 4}, {"s5", 4}};
  auto rejected = client.Post("/api/annotations", bad.dump(), "application/json");
  f.expect(rejected && rejected->status == 400, "s3 = 9 was not rejected");
  auto forbidden = client.Get("/api/export");
  f.expect(forbidden && forbidden->status == 403, "export is open without the admin token");

  auto exported = client.Get("/api/export", {{"Authorization", "Bearer admin-token"}});
  if (!exported || exported->status != 200) {
    f.add("export failed");
    return;
  }
  std::vector<annotation::ExportRow> rows;
  std::istringstream lines(exported->body);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) rows.push_back(annotation::export_row_from_json(nlohmann::json::parse(line)));
  }
  f.expect(rows.size() == 72, "export has " + std::to_string(rows.size()) + " rows");
  for (const auto& r : rows) {
    auto it = answers.find({r.record.annotator_id, r.record.item_id});
    f.expect(it != answers.end() && it->second == r.record.s, "export row differs from what was submitted");
  }

  // Oracle lookups built from the bundle and the submitted answers only.
  std::map<std::string, const annotation::AnnotationItem*> item_by_id;
  for (const auto& item : bundle.items) item_by_id[item.item_id] = &item;
  std::map<std::string, int> group_of;
  for (const auto& g : bundle.groups) {
    for (const auto& a : g.annotator_ids) group_of[a] = g.group_id;
  }

  const auto manual = annotation::manual_results_table(rows);
  f.expect(manual.size() == 3, "manual table has " + std::to_string(manual.size()) + " rows");
  for (const auto& row : manual) {
    for (int s = 0; s < 5; ++s) {
      std::vector<double> values;
      for (const auto& [key, a] : answers) {
        if (item_by_id.at(key.second)->source_strategy == row.strategy) values.push_back(a[s]);
      }
      f.near(row.mean[s], oracle::mean_std(values).first, "manual mean");
      f.expect(row.n == values.size(), "manual n");
    }
  }

  std::vector<judge::HelpfulnessJudgment> judgments;
  for (const auto& item : bundle.items) {
    judgments.push_back(judge::judge(item.essay, item.feedback, gen, item.source_run));
  }
  const auto corr = annotation::correlate_manual_automatic(rows, judgments);
  for (int s = 0; s < 5; ++s) {
    std::vector<double> x, y;
    for (const auto& item : bundle.items) {
      std::vector<double> values;
      for (const auto& [key, a] : answers) {
        if (key.second == item.item_id) values.push_back(a[s]);
      }
      x.push_back(oracle::mean_std(values).first);
      y.push_back(model.helpfulness(item.feedback));
    }
    const auto& cell = corr.cells.at("scripted-judge")[s];
    if (!cell) {
      f.add("correlation for S" + std::to_string(s + 1) + " undefined");
    } else {
      f.near(*cell, oracle::pearson(x, y), "correlation S" + std::to_string(s + 1));
    }
  }

  for (int statement = 1; statement <= 5; ++statement) {
    const auto alpha = annotation::group_alpha(rows, statement);
    std::vector<double> values;
    for (const auto& g : bundle.groups) {
      std::vector<std::vector<std::optional<double>>> matrix;
      for (const auto& a : g.annotator_ids) {
        std::vector<std::optional<double>> row;
        std::vector<std::string> items = g.item_ids;
        std::sort(items.begin(), items.end());
        for (const auto& item : items) row.push_back(answers.at({a, item})[statement - 1]);
        matrix.push_back(row);
      }
      values.push_back(oracle::alpha_interval(matrix));
    }
    f.expect(alpha.per_group.size() == values.size(), "alpha group count");
    for (std::size_t g = 0; g < alpha.per_group.size() && g < values.size(); ++g) {
      f.near(alpha.per_group[g].second, values[g], "alpha S" + std::to_string(statement));
    }
    f.near(alpha.mean, oracle::mean_std(values).first, "mean alpha S" + std::to_string(statement));
  }
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<void(Failures&)>>> criteria{
      {"metrics-oracle-suite", metrics_oracles},
      {"qwk-sanity", qwk_sanity},
      {"prompt-golden-files", prompt_goldens},
      {"grid-cardinality", grid_cardinality},
      {"few-shot-budget-property", budget_property},
      {"extraction-suite", extraction_suite},
      {"mock-end-to-end", mock_end_to_end},
      {"dev-test-hygiene", dev_test_hygiene},
      {"judge-suite", judge_suite},
      {"annotation-export-round-trip", annotation_round_trip},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Failures f;
    try {
      check(f);
    } catch (const std::exception& e) {
      f.add(std::string("exception: ") + e.what());
    }
    if (f.ok()) {
      std::printf("PASS %s\n", name.c_str());
    } else {
      std::printf("FAIL %s: %s\n", name.c_str(), f.summary().c_str());
      ++failed;
    }
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
