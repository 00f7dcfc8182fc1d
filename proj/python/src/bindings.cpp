#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "synthctl/donor_pool.hpp"
#include "synthctl/error.hpp"
#include "synthctl/inference.hpp"
#include "synthctl/logistic_vax.hpp"
#include "synthctl/panel_store.hpp"
#include "synthctl/scm_engine.hpp"
#include "synthctl/weight_solver.hpp"

namespace py = pybind11;
using namespace synthctl;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Panel make_panel(const std::vector<std::string>& units, const std::string& first_date, const RowMatrix& values) {
  if (static_cast<std::size_t>(values.rows()) != units.size()) {
    throw Error(ErrorCode::DimensionMismatch, "values needs one row per unit");
  }
  std::vector<double> flat(values.data(), values.data() + values.size());
  return Panel(to_unit_ids(units), Date::parse(first_date), static_cast<int>(values.cols()), std::move(flat));
}

KeyedTable make_table(const std::vector<std::string>& columns, const std::vector<std::string>& units,
                      const RowMatrix& values) {
  if (static_cast<std::size_t>(values.rows()) != units.size() ||
      static_cast<std::size_t>(values.cols()) != columns.size()) {
    throw Error(ErrorCode::DimensionMismatch, "values must be units x columns");
  }
  KeyedTable t;
  t.columns = columns;
  t.units = to_unit_ids(units);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    t.rows.emplace_back(values.row(r).data(), values.row(r).data() + values.cols());
  }
  return t;
}

std::vector<std::string> codes(const std::vector<UnitId>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(id.code());
  return out;
}

VMode v_mode_of(const std::string& s) {
  if (s == "optimized") return VMode::optimized;
  if (s == "inverse_variance") return VMode::inverse_variance;
  if (s == "fixed") return VMode::fixed;
  throw Error(ErrorCode::InvalidArgument, "v_mode must be optimized, inverse_variance or fixed");
}

StudySpec make_spec(const std::string& treated, const std::vector<std::string>& donors, int pre_length, int t_fit,
                    double l1, double l2, const std::string& v_mode, const std::vector<double>& fixed_v,
                    const std::string& placement, bool standardize, bool sparsify, std::uint64_t seed) {
  StudySpec s;
  s.treated = UnitId(treated);
  s.donors = to_unit_ids(donors);
  s.pre_length = pre_length;
  s.t_fit = t_fit;
  s.reg = Regularization{l1, l2};
  s.v_mode = v_mode_of(v_mode);
  s.fixed_v = fixed_v;
  if (placement == "tail") {
    s.placement = TrainPlacement::tail;
  } else if (placement == "head") {
    s.placement = TrainPlacement::head;
  } else {
    throw Error(ErrorCode::InvalidArgument, "placement must be tail or head");
  }
  s.standardize = standardize;
  s.sparsify = sparsify;
  s.solver.seed = seed;
  return s;
}

py::dict fit_dict(const SynthResult& r) {
  py::dict d;
  d["treated"] = r.treated.code();
  d["donors"] = codes(r.donors);
  d["w"] = r.w;
  d["predictors"] = r.predictor_names;
  d["v"] = r.v;
  d["w_objective"] = r.w_objective;
  d["pre_length"] = r.pre_length;
  d["training"] = py::make_tuple(r.split.training.begin, r.split.training.end);
  d["validation"] = py::make_tuple(r.split.validation.begin, r.split.validation.end);
  d["actual"] = r.actual;
  d["synthetic"] = r.synthetic;
  d["gap"] = r.gap;
  d["pre_mspe"] = r.pre_mspe;
  d["train_mspe"] = r.train_mspe;
  d["validation_mspe"] = r.validation_mspe;
  return d;
}

#define STUDY_ARGS                                                                                             \
  py::arg("panel"), py::arg("predictors"), py::arg("treated"), py::arg("donors"), py::arg("pre_length"),        \
      py::kw_only(), py::arg("t_fit") = 10, py::arg("l1") = 0.6, py::arg("l2") = 0.1,                           \
      py::arg("v_mode") = "optimized", py::arg("fixed_v") = std::vector<double>{}, py::arg("placement") = "tail", \
      py::arg("standardize") = true, py::arg("sparsify") = false, py::arg("seed") = 42

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Synthetic control estimation, placebo inference and logistic vaccination curves";
  m.attr("__version__") = "0.1.0";

  static py::handle error_type = py::exception<Error>(m, "SynthctlError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(py::str(e.what()));
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<Panel>(m, "Panel")
      .def(py::init(&make_panel), py::arg("units"), py::arg("first_date"), py::arg("values"))
      .def_static("from_csv", [](const std::string& path) { return ingest_panel(std::filesystem::path(path)); })
      .def_property_readonly("units", [](const Panel& p) { return codes(p.units()); })
      .def_property_readonly("num_days", &Panel::num_days)
      .def_property_readonly("first_date", [](const Panel& p) { return p.first_date().to_string(); })
      .def("day_index",
           [](const Panel& p, const std::string& iso) -> std::optional<int> { return p.day_index(Date::parse(iso)); })
      .def("row", [](const Panel& p, const std::string& unit) {
        auto r = p.row(UnitId(unit));
        return std::vector<double>(r.begin(), r.end());
      });

  py::class_<KeyedTable>(m, "KeyedTable")
      .def(py::init(&make_table), py::arg("columns"), py::arg("units"), py::arg("values"))
      .def(py::init<>())
      .def_static("from_csv", [](const std::string& path) { return read_keyed_table(std::filesystem::path(path)); })
      .def_readonly("columns", &KeyedTable::columns)
      .def_property_readonly("units", [](const KeyedTable& t) { return codes(t.units); });

  m.def("objective",
        [](const std::vector<double>& w, const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0, const Eigen::VectorXd& v,
           double l1, double l2) { return objective(w, WeightProblem{x1, x0, v}, Regularization{l1, l2}); },
        py::arg("w"), py::arg("x1"), py::arg("x0"), py::arg("v"), py::arg("l1") = 0.6, py::arg("l2") = 0.1);

  m.def("project_to_simplex", [](const std::vector<double>& y) { return project_to_simplex(y); }, py::arg("y"));

  m.def(
      "solve_w",
      [](const Eigen::VectorXd& x1, const Eigen::MatrixXd& x0, const Eigen::VectorXd& v, double l1, double l2,
         const std::string& mode, int restarts, std::uint64_t seed) {
        SolverOptions opts;
        opts.restarts = restarts;
        opts.seed = seed;
        if (mode == "simplex") {
          opts.mode = ConstraintMode::simplex;
        } else if (mode == "penalized") {
          opts.mode = ConstraintMode::penalized;
        } else {
          throw Error(ErrorCode::InvalidArgument, "mode must be simplex or penalized");
        }
        const auto sol = solve_w(WeightProblem{x1, x0, v}, Regularization{l1, l2}, opts);
        py::dict d;
        d["w"] = sol.w;
        d["objective"] = sol.objective;
        d["converged"] = sol.converged;
        d["iterations"] = sol.iterations;
        return d;
      },
      py::arg("x1"), py::arg("x0"), py::arg("v"), py::kw_only(), py::arg("l1") = 0.6, py::arg("l2") = 0.1,
      py::arg("mode") = "simplex", py::arg("restarts") = 8, py::arg("seed") = 42);

  m.def("sparsify_weights", [](const std::vector<double>& w) { return sparsify_weights(w); }, py::arg("w"));

  m.def(
      "fit_synth",
      [](const Panel& panel, const KeyedTable& predictors, const std::string& treated,
         const std::vector<std::string>& donors, int pre_length, int t_fit, double l1, double l2,
         const std::string& v_mode, const std::vector<double>& fixed_v, const std::string& placement, bool standardize,
         bool sparsify, std::uint64_t seed) {
        const auto spec = make_spec(treated, donors, pre_length, t_fit, l1, l2, v_mode, fixed_v, placement,
                                    standardize, sparsify, seed);
        SynthResult r;
        {
          py::gil_scoped_release release;
          r = fit_synth(spec, panel, predictors);
        }
        return fit_dict(r);
      },
      STUDY_ARGS);

  m.def(
      "placebo",
      [](const Panel& panel, const KeyedTable& predictors, const std::string& treated,
         const std::vector<std::string>& donors, int pre_length, int t_fit, double l1, double l2,
         const std::string& v_mode, const std::vector<double>& fixed_v, const std::string& placement, bool standardize,
         bool sparsify, std::uint64_t seed, int jobs, std::optional<int> placebo_pre_length) {
        const auto spec = make_spec(treated, donors, pre_length, t_fit, l1, l2, v_mode, fixed_v, placement,
                                    standardize, sparsify, seed);
        PlaceboOptions opts;
        opts.parallelism = jobs;
        opts.placebo_pre_length = placebo_pre_length;
        PlaceboEnsemble ens;
        {
          py::gil_scoped_release release;
          ens = placebo_run(spec, panel, predictors, opts);
        }
        py::list entries;
        for (const auto& e : ens.entries) {
          py::dict d;
          d["unit"] = e.unit.code();
          d["r"] = e.r;
          d["rmse_pre"] = e.rmse_pre;
          d["rmse_post"] = e.rmse_post;
          d["pre_length"] = e.pre_length;
          d["pre_floored"] = e.pre_floored;
          d["skipped"] = e.skipped;
          d["skip_reason"] = e.skip_reason;
          entries.append(d);
        }
        py::dict out;
        out["treated"] = ens.treated.code();
        out["p_value"] = p_value(ens);
        out["entries"] = entries;
        return out;
      },
      STUDY_ARGS, py::arg("jobs") = 1, py::arg("placebo_pre_length") = py::none());

  m.def("p_value", [](const std::vector<double>& r, std::size_t treated) { return p_value(r, treated); },
        py::arg("r"), py::arg("treated_index"));

  m.def("logistic_predict", &logistic_predict, py::arg("K"), py::arg("nu"), py::arg("p0"), py::arg("t"));

  m.def(
      "fit_logistic",
      [](const std::vector<double>& series, std::uint64_t seed) {
        LogisticFitOptions opts;
        opts.seed = seed;
        const auto f = fit_logistic(series, opts);
        py::dict d;
        d["K"] = f.K;
        d["nu"] = f.nu;
        d["p0"] = f.p0;
        d["sse"] = f.sse;
        d["identifiable"] = f.identifiable;
        return d;
      },
      py::arg("series"), py::kw_only(), py::arg("seed") = 42);

  m.def(
      "decile_summary",
      [](const std::vector<double>& param, const std::vector<double>& index, int bins) {
        py::list out;
        for (const auto& b : decile_summary(param, index, bins)) {
          py::dict d;
          d["count"] = b.count;
          d["mean"] = b.mean;
          d["std"] = b.std;
          out.append(d);
        }
        return out;
      },
      py::arg("param"), py::arg("index"), py::arg("bins") = 10);

  m.def("interpolate_missing", [](const std::vector<double>& s) { return interpolate_missing(s); }, py::arg("series"));
  m.def("enforce_monotone", [](const std::vector<double>& s) { return enforce_monotone(s); }, py::arg("series"));
  m.def("rolling_mean", [](const std::vector<double>& s, int window) { return rolling_mean(s, window); },
        py::arg("series"), py::arg("window") = 7);
  m.def(
      "clean_series",
      [](const std::vector<double>& s, double max_bad_fraction, int window) {
        CleaningPolicy p;
        p.max_bad_fraction = max_bad_fraction;
        p.window = window;
        const auto c = clean_series(s, p);
        py::dict d;
        d["dropped"] = c.dropped;
        d["bad_fraction"] = c.bad_fraction;
        d["values"] = c.values;
        return d;
      },
      py::arg("series"), py::kw_only(), py::arg("max_bad_fraction") = 0.10, py::arg("window") = 7);

  m.def(
      "select_predictors",
      [](const KeyedTable& table, const std::vector<std::pair<std::string, std::vector<std::string>>>& blocks,
         double threshold, int per_block) {
        PredictorBlocks b{blocks};
        b.validate(table.columns);
        const auto sel = select_predictors_naive(abs_correlation(table), b, threshold, per_block);
        return py::make_tuple(sel.selected, sel.short_blocks);
      },
      py::arg("table"), py::arg("blocks"), py::kw_only(), py::arg("threshold") = 0.4, py::arg("per_block") = 2);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
