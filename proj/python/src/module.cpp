#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "rankprompt/config.hpp"
#include "rankprompt/encoders.hpp"
#include "rankprompt/errors.hpp"
#include "rankprompt/experiment.hpp"
#include "rankprompt/matching.hpp"
#include "rankprompt/metrics.hpp"
#include "rankprompt/prompt.hpp"

namespace py = pybind11;
using namespace rankprompt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  if (m.size() != 0) std::memcpy(m.values().data(), a.data(), m.size() * sizeof(double));
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  if (m.size() != 0) std::memcpy(a.mutable_data(), m.values().data(), m.size() * sizeof(double));
  return a;
}

py::dict table_dict(const Table& t) {
  py::dict d;
  d["header"] = t.header;
  d["rows"] = t.rows;
  d["csv"] = t.to_csv();
  return d;
}

py::dict grid_dict(const GridResult& g) {
  py::list cells;
  for (const auto& c : g.cells) {
    py::dict cell;
    cell["label"] = c.label;
    cell["method"] = to_string(c.method);
    cell["maes"] = c.maes;
    cell["ordinalities"] = c.ordinalities;
    cell["mean_mae"] = c.mean_mae;
    cell["mean_ordinality"] = c.mean_ordinality;
    cell["note"] = c.note;
    cells.append(cell);
  }
  py::dict d;
  d["cells"] = cells;
  d["mae"] = table_dict(g.mae);
  d["ordinality"] = table_dict(g.ordinality);
  return d;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["mae"] = r.mae;
  d["mae_argmax"] = r.mae_argmax;
  d["mae_expectation"] = r.mae_expectation;
  d["accuracy"] = r.accuracy;
  d["ordinality"] = r.ordinality;
  d["per_rank_counts"] = r.per_rank_counts;
  return d;
}

RunConfig config_from(const std::string& text, std::size_t jobs) {
  RunConfig cfg = parse_config(text);
  if (jobs != 0) cfg.jobs = jobs;
  cfg.validate();
  return cfg;
}

template <typename F>
auto without_gil(F&& f) {
  py::gil_scoped_release release;
  return f();
}

}  // namespace

PYBIND11_MODULE(_rankprompt, m) {
  m.doc() = "Rank prompts, matching loss, ordinality metric and the experiment harness";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  m.def(
      "interpolation_matrix",
      [](std::size_t num_ranks, std::size_t num_base_ranks, const std::string& kind, double eps) {
        return to_array(build_interpolation_matrix(num_ranks, num_base_ranks, parse_interpolation(kind), eps));
      },
      py::arg("num_ranks"), py::arg("num_base_ranks"), py::arg("kind") = "linear", py::arg("eps") = 1e-5,
      "C x C' weights mapping base rank embeddings to every rank.");

  m.def(
      "similarity",
      [](const Array& images, const Array& prototypes, double temperature) {
        const SimilarityMatrix s = similarity(to_matrix(images), to_matrix(prototypes), temperature);
        return py::make_tuple(to_array(s.raw), to_array(s.row_norm), to_array(s.col_norm));
      },
      py::arg("images"), py::arg("prototypes"), py::arg("temperature") = 0.07,
      "(raw, row-softmax, column-softmax) score tables for unit-norm inputs.");

  m.def(
      "contrastive_loss",
      [](const Array& images, const Array& prototypes, const std::vector<std::size_t>& ranks, double temperature) {
        const Matrix p = to_matrix(prototypes);
        return contrastive_loss(similarity(to_matrix(images), p, temperature), make_labels(ranks, p.rows()));
      },
      py::arg("images"), py::arg("prototypes"), py::arg("ranks"), py::arg("temperature") = 0.07);

  m.def(
      "ordinality_score",
      [](const Array& prototypes, double temperature) { return ordinality_score(to_matrix(prototypes), temperature); },
      py::arg("prototypes"), py::arg("temperature") = 0.07);
  m.def(
      "ordinality_from_similarity", [](const Array& s) { return ordinality_from_similarity(to_matrix(s)); },
      py::arg("similarity"));

  m.def(
      "generate_synthetic",
      [](std::size_t num_ranks, std::size_t per_rank, std::size_t input_dim, double noise_sigma, std::uint64_t seed) {
        const OrdinalDataset ds = generate_synthetic(num_ranks, per_rank, input_dim, noise_sigma, seed);
        return py::make_tuple(to_array(ds.features), ds.ranks);
      },
      py::arg("num_ranks") = 20, py::arg("per_rank") = 40, py::arg("input_dim") = 16, py::arg("noise_sigma") = 0.25,
      py::arg("seed") = 0, "(features, ranks) for the synthetic ordinal task.");

  m.def(
      "export_prototypes", [](const std::string& path, const Array& p) { export_prototypes(path, to_matrix(p)); },
      py::arg("path"), py::arg("prototypes"));
  m.def(
      "import_prototypes", [](const std::string& path) { return to_array(import_prototypes(path)); },
      py::arg("path"));

  m.def(
      "render_config", [](const std::string& text) { return render_config(parse_config(text, false)); },
      py::arg("text"), "Resolved `key = value` form of a partial config.");
  m.def("config_keys", &config_keys);

  m.def(
      "train",
      [](const std::string& text) {
        const RunConfig cfg = config_from(text, 0);
        const TrainSummary s = without_gil([&] { return cmd_train(cfg); });
        py::dict d;
        d["run_dir"] = s.run_dir;
        d["metrics"] = report_dict(s.report);
        d["image_encoder_only"] = s.image_encoder_only;
        return d;
      },
      py::arg("config"), "Single run; writes artifacts to the config's output_dir.");

  m.def(
      "sweep",
      [](const std::string& text, const std::vector<std::size_t>& counts, const std::vector<std::string>& types,
         std::size_t jobs) {
        const RunConfig cfg = config_from(text, jobs);
        std::vector<Interpolation> kinds;
        for (const auto& t : types) kinds.push_back(parse_interpolation(t));
        return grid_dict(without_gil([&] { return cmd_sweep_interpolation(cfg, counts, kinds); }));
      },
      py::arg("config"), py::arg("counts") = std::vector<std::size_t>{2, 3, 4, 5, 6, 7, 8, 9},
      py::arg("types") = std::vector<std::string>{"linear", "inverse_proportion"}, py::arg("jobs") = 0);

  m.def(
      "ablation",
      [](const std::string& text, std::size_t jobs) {
        const RunConfig cfg = config_from(text, jobs);
        return grid_dict(without_gil([&] { return cmd_ablation(cfg); }));
      },
      py::arg("config"), py::arg("jobs") = 0);

  m.def(
      "fewshot",
      [](const std::string& text, const std::vector<std::size_t>& shots, std::size_t jobs) {
        const RunConfig cfg = config_from(text, jobs);
        return grid_dict(without_gil([&] { return cmd_fewshot(cfg, shots); }));
      },
      py::arg("config"), py::arg("shots") = std::vector<std::size_t>{1, 2, 4, 8}, py::arg("jobs") = 0);

  m.def(
      "distshift",
      [](const std::string& text, const std::vector<std::pair<std::size_t, double>>& shifts, std::size_t jobs) {
        const RunConfig cfg = config_from(text, jobs);
        std::vector<ShiftSetting> grid;
        for (const auto& [classes, fraction] : shifts) grid.push_back({classes, fraction});
        return grid_dict(without_gil([&] { return cmd_distshift(cfg, grid); }));
      },
      py::arg("config"), py::arg("shifts"), py::arg("jobs") = 0,
      "`shifts` holds (reduce_classes, reduce_fraction) pairs.");

  m.def(
      "report",
      [](const std::string& run_dir) {
        const ReportResult r = cmd_report(run_dir);
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["text"] = r.text;
        d["problems"] = r.problems;
        return d;
      },
      py::arg("run_dir"));
}
