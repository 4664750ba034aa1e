#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ivcr/artifact.hpp"
#include "ivcr/pipeline.hpp"
#include "ivcr/prediction.hpp"
#include "ivcr/simulate.hpp"

namespace py = pybind11;
using namespace ivcr;

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

std::vector<std::vector<double>> to_mat(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out[i].resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

/// Prediction-capable fit handle shared by the fresh-fit and the
/// loaded-artifact paths.
struct PyFit {
  SubdistFit fit;
  VarianceComponents variance;
  CifCovariancePieces pieces;
  bool has_first_stage = false;
  std::vector<double> gamma;
  std::vector<double> gamma_se;
  double sigma2_hat = 0.0;
  double f_stat = 0.0;
  bool weak = false;
  std::string weak_advice;
  std::uint64_t input_digest = 0;

  py::dict coefficients(double level) const {
    py::dict out;
    py::list rows;
    for (const auto& c : wald_summary(fit, variance, level)) {
      py::dict row;
      row["name"] = c.name;
      row["estimate"] = c.estimate;
      row["se"] = c.se;
      row["z"] = c.z;
      row["p_value"] = c.p_value;
      row["ci_lower"] = c.ci_lower;
      row["ci_upper"] = c.ci_upper;
      row["degenerate"] = c.degenerate;
      rows.append(row);
    }
    out["rows"] = rows;
    out["level"] = level;
    return out;
  }

  py::dict predict(double exposure, const std::vector<double>& covariates,
                   const std::vector<double>& times, double level) const {
    CifCurve c = predict_cif(fit, exposure, covariates, times);
    cif_bands(c, fit, variance, pieces, exposure, covariates, level);
    py::dict out;
    out["times"] = c.times;
    out["values"] = c.values;
    out["se"] = c.se;
    out["lower"] = c.lower;
    out["upper"] = c.upper;
    out["level"] = c.level;
    out["warn_out_of_range"] = c.warn_out_of_range;
    out["warn_nonmonotone"] = c.warn_nonmonotone;
    return out;
  }

  void save(const std::string& path) const {
    FitArtifact a;
    a.input_digest = input_digest;
    a.fit = fit;
    a.variance = variance;
    a.pieces = pieces;
    a.has_first_stage = has_first_stage;
    if (has_first_stage) {
      a.gamma = Eigen::Map<const Eigen::VectorXd>(gamma.data(),
                                                  static_cast<long>(gamma.size()));
      a.gamma_se = Eigen::Map<const Eigen::VectorXd>(
          gamma_se.data(), static_cast<long>(gamma_se.size()));
      a.sigma2_hat = sigma2_hat;
      a.f_stat = f_stat;
    }
    save_artifact(path, a);
  }
};

PyFit fit_csv(const std::string& path, bool naive, std::optional<double> tau,
              double level) {
  Dataset raw = load_dataset_file(path);
  FitOptions opts;
  opts.tau = tau;
  opts.ci_level = level;
  FitResult r = run_fit(raw, naive ? FitMode::naive : FitMode::iv, opts);
  PyFit out;
  out.fit = r.fit;
  out.variance = r.variance;
  out.pieces = cif_covariance_pieces(r.fit);
  out.input_digest = digest_file(path);
  if (r.first) {
    out.has_first_stage = true;
    out.gamma = to_vec(r.first->gamma);
    out.gamma_se = to_vec(r.first->gamma_se);
    out.sigma2_hat = r.first->sigma2_hat;
    out.f_stat = r.first->f_stat;
    out.weak = r.weak.weak;
    out.weak_advice = r.weak.advice;
  }
  return out;
}

PyFit load_fit(const std::string& path) {
  FitArtifact a = load_artifact(path);
  PyFit out;
  out.fit = a.fit;
  out.variance = a.variance;
  out.pieces = a.pieces;
  out.input_digest = a.input_digest;
  out.has_first_stage = a.has_first_stage;
  if (a.has_first_stage) {
    out.gamma = to_vec(a.gamma);
    out.gamma_se = to_vec(a.gamma_se);
    out.sigma2_hat = a.sigma2_hat;
    out.f_stat = a.f_stat;
    out.weak = a.f_stat <= 10.0;
  }
  return out;
}

py::dict method_dict(const MethodSummary& m) {
  py::dict out;
  out["bias"] = m.bias;
  out["empirical_se"] = m.empirical_se;
  out["mean_sandwich_se"] = m.mean_sandwich_se;
  out["coverage"] = m.coverage;
  out["failures"] = m.failures;
  out["estimates"] = m.estimates;
  return out;
}

py::dict simulate(int n, double gamma2, double beta_u, int reps,
                  std::uint64_t seed, double censoring,
                  const std::string& link, int workers) {
  SimScenario s;
  s.n = n;
  s.gamma2 = gamma2;
  s.beta_u = beta_u;
  s.reps = reps;
  s.seed = seed;
  s.target_censoring = censoring;
  s.workers = workers;
  if (link == "logistic") {
    s.link = ExposureLink::logistic;
  } else if (link != "linear") {
    throw UsageError("sim_engine", "link must be 'linear' or 'logistic'");
  }
  SimResult r = run_monte_carlo(s);
  py::dict out;
  out["iv"] = method_dict(r.iv);
  out["naive"] = method_dict(r.naive);
  out["reps"] = r.reps;
  out["censoring_rate"] = r.censoring_rate;
  out["realized_censoring"] = r.realized_censoring;
  out["weak_flag_rate"] = r.weak_flag_rate;
  out["resample_count"] = r.resample_count;
  return out;
}

py::list km_curve(const std::string& path) {
  Dataset d = load_dataset_file(path);
  CensoringSurvival g = fit_km_censoring(d);
  py::list out;
  out.append(py::make_tuple(0.0, 1.0));
  for (std::size_t k = 0; k < g.jump_times.size(); ++k)
    out.append(py::make_tuple(g.jump_times[k], g.values[k]));
  return out;
}

}  // namespace

PYBIND11_MODULE(_ivcr, m) {
  m.doc() =
      "Two-stage instrumental-variable estimation for additive "
      "subdistribution hazard models with competing risks";
  m.attr("__version__") = kToolVersion;

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  py::class_<PyFit>(m, "Fit")
      .def_property_readonly("beta",
                             [](const PyFit& f) { return to_vec(f.fit.beta); })
      .def_property_readonly(
          "covariance",
          [](const PyFit& f) { return to_mat(f.variance.covariance); })
      .def_property_readonly("tau", [](const PyFit& f) { return f.fit.tau; })
      .def_property_readonly("n", [](const PyFit& f) { return f.fit.n; })
      .def_property_readonly("p", [](const PyFit& f) { return f.fit.p; })
      .def_property_readonly("mode",
                             [](const PyFit& f) {
                               return f.fit.mode == FitMode::iv ? "iv"
                                                                : "naive";
                             })
      .def_readonly("has_first_stage", &PyFit::has_first_stage)
      .def_readonly("gamma", &PyFit::gamma)
      .def_readonly("gamma_se", &PyFit::gamma_se)
      .def_readonly("sigma2_hat", &PyFit::sigma2_hat)
      .def_readonly("f_stat", &PyFit::f_stat)
      .def_readonly("weak_instrument", &PyFit::weak)
      .def_readonly("weak_advice", &PyFit::weak_advice)
      .def("coefficients", &PyFit::coefficients, py::arg("level") = 0.95)
      .def("predict", &PyFit::predict, py::arg("exposure"),
           py::arg("covariates"), py::arg("times"), py::arg("level") = 0.95)
      .def("save", &PyFit::save, py::arg("path"));

  m.def("fit", &fit_csv, py::arg("path"), py::arg("naive") = false,
        py::arg("tau") = std::nullopt, py::arg("level") = 0.95,
        "Fit the model to a CSV dataset "
        "(columns id,time,status,exposure,instrument,covariates...)");
  m.def("load", &load_fit, py::arg("path"),
        "Reload a saved fit artifact for prediction");
  m.def("simulate", &simulate, py::arg("n") = 1000, py::arg("gamma2") = 0.4,
        py::arg("beta_u") = 0.4, py::arg("reps") = 1000,
        py::arg("seed") = 20240811, py::arg("censoring") = 0.30,
        py::arg("link") = "linear", py::arg("workers") = 0,
        "Monte Carlo bias / SE / coverage study of the IV and naive fits");
  m.def("km", &km_curve, py::arg("path"),
        "Censoring survival step function as (time, G) pairs");
  m.def(
      "write_synthetic",
      [](const std::string& path, int n, int p, std::uint64_t seed) {
        write_dataset_file(path, synthetic_registry_like(n, p, seed));
      },
      py::arg("path"), py::arg("n") = 994, py::arg("p") = 3,
      py::arg("seed") = 1,
      "Write a registry-shaped synthetic CSV for pipeline exercises");
}
