#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <spdlog/spdlog.h>

#include "essayfb/corpus.hpp"
#include "essayfb/errors.hpp"
#include "essayfb/experiment.hpp"
#include "essayfb/extraction.hpp"
#include "essayfb/judge.hpp"
#include "essayfb/llm_client.hpp"
#include "essayfb/metrics.hpp"
#include "essayfb/prompting.hpp"
#include "essayfb/random.hpp"
#include "essayfb/records.hpp"
#include "essayfb/report.hpp"
#include "essayfb/scripted_model.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace essayfb;
using nlohmann::json;

namespace {

py::object to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get_ref<const std::string&>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(to_py(v));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = to_py(v);
      return out;
    }
    default: return py::none();
  }
}

// Round-trips through Python's json module; only used on small config dicts.
json from_py(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

prompting::Strategy make_strategy(const std::string& pattern, const std::string& instruction, int paraphrase,
                                  const std::string& shot) {
  return {prompting::parse_pattern(pattern), prompting::parse_instruction_type(instruction), paraphrase,
          prompting::parse_shot_mode(shot)};
}

py::dict extraction_dict(const extraction::ScoreExtraction& e) {
  py::dict d;
  d["score"] = e.score ? py::object(py::int_(*e.score)) : py::none();
  d["method"] = std::string(extraction::to_string(e.method));
  d["raw_span"] = e.raw_span;
  return d;
}

std::vector<experiment::RunRecord> records_from_py(const py::iterable& records) {
  std::vector<experiment::RunRecord> out;
  for (const auto& r : records) out.push_back(experiment::record_from_json(from_py(r)));
  return out;
}

/// Offline scripted endpoint bound to a corpus the Python side keeps alive.
class ScriptedEndpoint {
 public:
  ScriptedEndpoint(std::shared_ptr<corpus::Corpus> corpus, std::uint64_t seed, int port)
      : corpus_(std::move(corpus)), model_(*corpus_, seed), endpoint_(model_.responder(), port) {}

  std::string base_url() const { return endpoint_.base_url(); }
  std::size_t calls() const { return endpoint_.calls(); }
  void stop() { endpoint_.stop(); }

 private:
  std::shared_ptr<corpus::Corpus> corpus_;
  llm::ScriptedModel model_;
  llm::MockEndpoint endpoint_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prompt assembly, score extraction, metrics and grid runs for LLM essay scoring";
  spdlog::set_level(spdlog::level::warn);

  auto base = py::register_exception<Error>(m, "EssayfbError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<NotFoundError>(m, "NotFoundError", base);
  py::register_exception<MetricError>(m, "MetricError", base);

  m.def("set_log_level", [](const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); });

  // Metrics
  m.def(
      "qwk",
      [](std::vector<int> a, std::vector<int> b, int min, int max) {
        return metrics::qwk({std::move(a), min, max}, {std::move(b), min, max});
      },
      py::arg("a"), py::arg("b"), py::arg("min"), py::arg("max"),
      "Quadratic weighted kappa over the inclusive label range [min, max].");
  m.def(
      "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return metrics::pearson(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "mean_std",
      [](const std::vector<double>& v) {
        const auto ms = metrics::mean_std(v);
        return py::make_tuple(ms.mean, ms.std);
      },
      py::arg("values"), "Mean and population standard deviation.");
  m.def(
      "krippendorff_alpha_interval",
      [](std::vector<std::vector<std::optional<double>>> rows) {
        return metrics::krippendorff_alpha_interval({std::move(rows)});
      },
      py::arg("rows"), "Annotators x items; None marks a missing judgment.");

  // Extraction
  m.def(
      "extract_score",
      [](const std::string& text, int min, int max) { return extraction_dict(extraction::extract_score(text, {min, max})); },
      py::arg("text"), py::arg("min"), py::arg("max"));
  m.def(
      "split_feedback",
      [](const std::string& text, int min, int max) {
        return extraction::split_feedback(text, extraction::extract_score(text, {min, max})).text;
      },
      py::arg("text"), py::arg("min"), py::arg("max"), "Response text with the score block removed.");
  m.def("build_judge_prompt", &judge::build_judge_prompt, py::arg("essay"), py::arg("feedback"));

  // Corpus and prompts
  py::class_<corpus::Corpus, std::shared_ptr<corpus::Corpus>>(m, "Corpus")
      .def_property_readonly("essay_ids",
                             [](const corpus::Corpus& c) {
                               std::vector<corpus::EssayId> ids;
                               for (const auto& e : c.essays) ids.push_back(e.essay_id);
                               return ids;
                             })
      .def_property_readonly("set_ids",
                             [](const corpus::Corpus& c) {
                               std::vector<int> ids;
                               for (const auto& [id, s] : c.sets) ids.push_back(id);
                               return ids;
                             })
      .def("essay",
           [](const corpus::Corpus& c, corpus::EssayId id) {
             const auto& e = c.essay(id);
             py::dict d;
             d["essay_id"] = e.essay_id;
             d["set_id"] = e.set_id;
             d["text"] = e.text;
             d["gold_score"] = e.gold_score;
             return d;
           })
      .def("score_range",
           [](const corpus::Corpus& c, int set_id) {
             const auto& r = c.set(set_id).score_range;
             return py::make_tuple(r.min, r.max);
           })
      .def("__len__", [](const corpus::Corpus& c) { return c.essays.size(); });

  m.def(
      "load_corpus",
      [](const fs::path& essays, const fs::path& sets, const fs::path& folds) {
        return std::make_shared<corpus::Corpus>(corpus::load_corpus(essays, sets, folds));
      },
      py::arg("essays"), py::arg("sets"), py::arg("folds"));

  m.def(
      "assemble_prompt",
      [](const corpus::Corpus& c, corpus::EssayId essay_id, const std::string& pattern,
         const std::string& instruction, int paraphrase, const std::string& shot, std::uint64_t seed) {
        const auto& essay = c.essay(essay_id);
        SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(essay.set_id),
                               static_cast<std::uint64_t>(essay.essay_id)));
        const auto p = prompting::assemble(make_strategy(pattern, instruction, paraphrase, shot),
                                           c.set(essay.set_id), essay, rng);
        py::dict meta;
        meta["exemplar_indices"] = p.meta.exemplar_indices;
        meta["character_count"] = p.meta.character_count;
        meta["over_budget"] = p.meta.over_budget;
        return py::make_tuple(p.text, meta);
      },
      py::arg("corpus"), py::arg("essay_id"), py::arg("pattern"), py::arg("instruction"),
      py::arg("paraphrase") = 1, py::arg("shot") = "Zero", py::arg("seed") = 0,
      "Assembled prompt and its metadata, seeded the same way as a grid run.");

  // Experiment
  m.def(
      "plan_strategies",
      [](const py::dict& plan) {
        std::vector<std::string> out;
        for (const auto& s : experiment::plan_from_json(from_py(plan)).strategies()) out.push_back(prompting::to_string(s));
        return out;
      },
      py::arg("plan"));

  m.def(
      "run_grid",
      [](const corpus::Corpus& c, const py::dict& plan_doc, const std::string& split,
         std::optional<fs::path> cache_dir) {
        const auto plan = experiment::plan_from_json(from_py(plan_doc));
        std::shared_ptr<llm::ResponseCache> cache;
        if (cache_dir) cache = std::make_shared<llm::ResponseCache>(*cache_dir);
        llm::ClientGenerator generator(llm::ChatClient(plan.endpoint), cache);
        experiment::GridResult result;
        {
          py::gil_scoped_release release;
          result = experiment::run_grid(plan, c, experiment::parse_split_role(split), generator);
        }
        py::list records, failures;
        for (const auto& r : result.records) records.append(to_py(experiment::to_json(r)));
        for (const auto& f : result.failures) failures.append(to_py(experiment::to_json(f)));
        return py::make_tuple(records, failures);
      },
      py::arg("corpus"), py::arg("plan"), py::arg("split") = "test", py::arg("cache_dir") = std::nullopt,
      "Runs the plan's grid against its endpoint; returns (records, failures) as dicts.");

  m.def(
      "score_table",
      [](const py::iterable& records, const std::string& facet, bool best_on_dev, const std::string& format,
         std::vector<int> sets) {
        const experiment::RecordStore store(records_from_py(records));
        const auto table = experiment::score_table(
            store, experiment::parse_facet(facet),
            best_on_dev ? experiment::Aggregation::BestOnDev : experiment::Aggregation::MeanOverInstructions,
            corpus::asap_score_ranges(), std::move(sets));
        return report::render(experiment::to_report_table(table, "qwk"), report::parse_format(format));
      },
      py::arg("records"), py::arg("facet") = "pattern", py::arg("best_on_dev") = false,
      py::arg("format") = "markdown", py::arg("sets") = std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8},
      "Rendered QWK table over record dicts.");

  py::class_<ScriptedEndpoint>(m, "ScriptedEndpoint")
      .def(py::init<std::shared_ptr<corpus::Corpus>, std::uint64_t, int>(), py::arg("corpus"),
           py::arg("seed") = 0, py::arg("port") = 0)
      .def_property_readonly("base_url", &ScriptedEndpoint::base_url)
      .def_property_readonly("calls", &ScriptedEndpoint::calls)
      .def("stop", &ScriptedEndpoint::stop);
}
