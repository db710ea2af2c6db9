#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qfces/annotations.hpp"
#include "qfces/bench.hpp"
#include "qfces/catalog.hpp"
#include "qfces/ces_parser.hpp"
#include "qfces/error.hpp"
#include "qfces/judge.hpp"
#include "qfces/metaeval.hpp"

namespace py = pybind11;
using namespace qfces;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

metaeval::MetricTable metric_table(const std::map<std::pair<std::string, std::string>, double>& m) {
  return metaeval::MetricTable(m.begin(), m.end());
}

annotations::AnnotationSet rating_set(const py::iterable& records) {
  annotations::AnnotationSet s;
  auto dumps = py::module_::import("json").attr("dumps");
  for (const auto& r : records) {
    s.add(annotations::record_from_json(nlohmann::json::parse(dumps(r).cast<std::string>())));
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Comparative-summary scoring, correlation and agreement routines";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

  m.def("extract_score", [](const std::string& text) { return judge::extract_score(text); }, py::arg("text"));

  m.def(
      "weighted_score",
      [](const std::map<int, std::size_t>& counts) {
        return judge::weighted_score(judge::ScoreDistribution::from_counts(counts));
      },
      py::arg("counts"), "Probability-weighted score from {score: count}.");

  m.def(
      "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return metaeval::spearman(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "kendall_tau_b",
      [](const std::vector<double>& x, const std::vector<double>& y) { return metaeval::kendall_tau_b(x, y); },
      py::arg("x"), py::arg("y"));

  m.def(
      "summary_level_corr",
      [](const std::map<std::pair<std::string, std::string>, double>& a,
         const std::map<std::pair<std::string, std::string>, double>& b, std::size_t iterations, std::uint64_t seed,
         bool pvalues) {
        metaeval::SummaryLevelOptions o;
        o.iterations = iterations;
        o.seed = seed;
        o.compute_pvalues = pvalues;
        return to_py(metaeval::to_json(metaeval::summary_level_corr(metric_table(a), metric_table(b), o)));
      },
      py::arg("a"), py::arg("b"), py::arg("iterations") = 10000, py::arg("seed") = 0, py::arg("pvalues") = true,
      "Metrics keyed by (query_id, summary_id).");

  m.def(
      "krippendorff_alpha",
      [](const py::iterable& records, const std::string& dimension, std::optional<int> round,
         const std::string& difference) {
        return annotations::krippendorff_alpha(
            rating_set(records), dimension, round,
            difference == "interval" ? annotations::Difference::Interval : annotations::Difference::Ordinal);
      },
      py::arg("records"), py::arg("dimension"), py::arg("round") = 1, py::arg("difference") = "ordinal");

  m.def(
      "flag_discrepancies",
      [](const py::iterable& records, int threshold) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& k : annotations::flag_discrepancies(rating_set(records), threshold).flagged) {
          out.emplace_back(k.query_id, k.summary_id, k.dimension);
        }
        return out;
      },
      py::arg("records"), py::arg("threshold") = 2);

  m.def(
      "check_format", [](const std::string& text) { return to_py(ces::to_json(ces::check_format(text))); },
      py::arg("text"));
  m.def(
      "parse_ces", [](const std::string& text, bool strict) { return to_py(ces::to_json(ces::parse(text, strict))); },
      py::arg("text"), py::arg("strict") = true);

  m.def("compare_means", &bench::compare_means, py::arg("mean_mos_ms"), py::arg("mean_dia_ms"));

  m.def(
      "dataset_stats",
      [](const std::string& path, bool strict) {
        return to_py(catalog::to_json(catalog::compute_stats(catalog::load_dataset(path, strict))));
      },
      py::arg("path"), py::arg("strict") = true);
}
