#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ivcr/artifact.hpp"
#include "ivcr/pipeline.hpp"
#include "ivcr/prediction.hpp"
#include "ivcr/simulate.hpp"

namespace {

using namespace ivcr;

struct OutputTarget {
  std::string path;  // empty = stdout
  std::ofstream file;
  std::ostream& stream() {
    if (path.empty()) return std::cout;
    if (!file.is_open()) {
      file.open(path);
      if (!file) throw DataError("cli_io", "cannot write '" + path + "'");
    }
    return file;
  }
};

std::string fmt(double v, bool full) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), full ? "%.17g" : "%.4g", v);
  return buf;
}

ColumnSchema parse_schema(const std::vector<std::string>& entries) {
  ColumnSchema schema;
  for (const auto& e : entries) {
    auto eq = e.find('=');
    if (eq == std::string::npos) {
      throw UsageError("cli_io", "schema entry '" + e + "' is not role=column");
    }
    const std::string role = e.substr(0, eq);
    const std::string col = e.substr(eq + 1);
    if (role == "id") schema.id = col;
    else if (role == "time") schema.time = col;
    else if (role == "status") schema.status = col;
    else if (role == "exposure") schema.exposure = col;
    else if (role == "instrument") schema.instrument = col;
    else if (role == "covariates") {
      schema.covariates.clear();
      std::stringstream ss(col);
      std::string name;
      while (std::getline(ss, name, '+')) schema.covariates.push_back(name);
    } else {
      throw UsageError("cli_io", "unknown schema role '" + role + "'");
    }
  }
  return schema;
}

void print_fit_report(std::ostream& os, const FitResult& r, bool full) {
  os << "MODEL: additive subdistribution hazard, "
     << (r.fit.mode == FitMode::iv ? "two-stage IV" : "naive") << " fit\n";
  int events = 0, competing = 0, censored = 0;
  for (const auto& s : r.data.subjects) {
    if (s.status == 0) ++censored;
    else if (s.status == r.data.cause_of_interest) ++events;
    else ++competing;
  }
  os << "n = " << r.fit.n << ", cause events = " << events
     << ", competing = " << competing << ", censored = " << censored << "\n";
  os << "tau = " << fmt(r.fit.tau, full) << ", level = "
     << fmt(r.fit.ci_level, full) << "\n\n";

  if (r.first) {
    os << "FIRST STAGE (exposure ~ instrument + covariates)\n";
    const char* names[] = {"intercept", "instrument"};
    for (int j = 0; j < r.first->gamma.size(); ++j) {
      const std::string nm =
          j < 2 ? names[j] : "x" + std::to_string(j - 1);
      os << "  " << nm << "  gamma = " << fmt(r.first->gamma(j), full)
         << "  se = " << fmt(r.first->gamma_se(j), full) << "\n";
    }
    os << "  sigma2 = " << fmt(r.first->sigma2_hat, full)
       << "  F = " << fmt(r.first->f_stat, full)
       << "  weak = " << (r.weak.weak ? "yes" : "no") << "\n";
    os << "  " << r.weak.advice << "\n\n";
  }

  os << "COEFFICIENTS\n";
  os << "  name  estimate  se  z  p  ci_lower  ci_upper\n";
  const auto rows = wald_summary(r.fit, r.variance, r.fit.ci_level);
  for (const auto& row : rows) {
    os << "  " << row.name << "  " << fmt(row.estimate, full) << "  "
       << fmt(row.se, full) << "  " << fmt(row.z, full) << "  "
       << fmt(row.p_value, full) << "  " << fmt(row.ci_lower, full) << "  "
       << fmt(row.ci_upper, full) << "\n";
  }
}

int run_fit_cmd(const std::string& input, const std::vector<std::string>& schema_kv,
                bool naive, std::optional<double> tau, double level,
                const std::string& out, const std::string& artifact_path,
                const std::string& baseline_path,
                const std::string& influence_path, bool full) {
  Dataset data = load_dataset_file(input, parse_schema(schema_kv));
  FitOptions opts;
  opts.tau = tau;
  opts.ci_level = level;
  FitResult result = run_fit(data, naive ? FitMode::naive : FitMode::iv, opts);

  OutputTarget target{out};
  print_fit_report(target.stream(), result, full);

  if (!artifact_path.empty()) {
    FitArtifact art = make_artifact(result, digest_file(input));
    save_artifact(artifact_path, art);
    target.stream() << "\nartifact written to " << artifact_path << "\n";
  }
  if (!baseline_path.empty()) {
    std::ofstream bf(baseline_path);
    if (!bf) throw DataError("cli_io", "cannot write '" + baseline_path + "'");
    bf << "time,H0_star,H0_mod\n";
    for (std::size_t k = 0; k < result.fit.h0_star.times.size(); ++k) {
      bf << fmt(result.fit.h0_star.times[k], true) << ','
         << fmt(result.fit.h0_star.values[k], true) << ','
         << fmt(result.fit.h0_mod.values[k], true) << "\n";
    }
  }
  if (!influence_path.empty()) {
    std::ofstream inf(influence_path);
    if (!inf) throw DataError("cli_io", "cannot write '" + influence_path + "'");
    const int d = static_cast<int>(result.fit.beta.size());
    inf << "id";
    for (const char* part : {"phi1", "phi2", "phi3"})
      for (int j = 0; j < d; ++j) inf << ',' << part << '_' << j;
    inf << "\n";
    for (int i = 0; i < result.fit.n; ++i) {
      inf << result.data.subjects[i].id;
      for (const Eigen::MatrixXd* mat :
           {&result.influence.phi1, &result.influence.phi2,
            &result.influence.phi3})
        for (int j = 0; j < d; ++j) inf << ',' << fmt((*mat)(i, j), true);
      inf << "\n";
    }
  }
  return 0;
}

int run_predict_cmd(const std::string& artifact_path, double exposure,
                    std::vector<double> covariates, std::vector<double> times,
                    int grid_points, const std::string& input, double level,
                    const std::string& out, bool full) {
  FitArtifact art = load_artifact(artifact_path);
  if (!input.empty() && digest_file(input) != art.input_digest) {
    throw DataError("cli_io",
                    "input digest mismatch: '" + input +
                        "' is not the dataset this artifact was fitted on");
  }
  if (times.empty()) {
    if (grid_points < 2) {
      throw UsageError("cli_io", "need --times or --grid with at least 2 points");
    }
    for (int k = 0; k < grid_points; ++k) {
      times.push_back(art.fit.tau * k / (grid_points - 1));
    }
  }
  CifCurve curve = predict_cif(art.fit, exposure, covariates, times);
  cif_bands(curve, art.fit, art.variance, art.pieces, exposure, covariates,
            level);

  OutputTarget target{out};
  auto& os = target.stream();
  os << "time,F1,se,lower,upper\n";
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    os << fmt(curve.times[k], full) << ',' << fmt(curve.values[k], full) << ','
       << fmt(curve.se[k], full) << ',' << fmt(curve.lower[k], full) << ','
       << fmt(curve.upper[k], full) << "\n";
  }
  if (curve.warn_out_of_range) {
    std::cerr << "warning: some predicted values fell outside [0, 1) and were clipped\n";
  }
  if (curve.warn_nonmonotone) {
    std::cerr << "warning: predicted incidence decreases somewhere on the grid\n";
  }
  return 0;
}

int run_simulate_cmd(SimScenario base, const std::vector<int>& ns,
                     const std::vector<double>& gamma2s,
                     const std::vector<double>& beta_us,
                     const std::string& out, bool full) {
  OutputTarget target{out};
  auto& os = target.stream();
  os << "n,gamma2,beta_u,censoring,reps,method,bias,emp_se,mean_se,coverage,"
        "failures,weak_rate,realized_censoring\n";
  for (int n : ns) {
    for (double g2 : gamma2s) {
      for (double bu : beta_us) {
        SimScenario sc = base;
        sc.n = n;
        sc.gamma2 = g2;
        sc.beta_u = bu;
        SimResult res = run_monte_carlo(sc);
        auto row = [&](const char* method, const MethodSummary& m) {
          os << n << ',' << fmt(g2, full) << ',' << fmt(bu, full) << ','
             << fmt(sc.target_censoring, full) << ',' << sc.reps << ','
             << method << ',' << fmt(m.bias, full) << ','
             << fmt(m.empirical_se, full) << ',' << fmt(m.mean_sandwich_se, full)
             << ',' << fmt(m.coverage, full) << ',' << m.failures << ','
             << fmt(res.weak_flag_rate, full) << ','
             << fmt(res.realized_censoring, full) << "\n";
        };
        row("iv", res.iv);
        row("naive", res.naive);
      }
    }
  }
  return 0;
}

int run_km_cmd(const std::string& input, const std::vector<std::string>& schema_kv,
               const std::string& out, bool full) {
  Dataset data = load_dataset_file(input, parse_schema(schema_kv));
  CensoringSurvival G = fit_km_censoring(data);
  OutputTarget target{out};
  auto& os = target.stream();
  os << "0 1\n";
  for (std::size_t k = 0; k < G.jump_times.size(); ++k) {
    os << fmt(G.jump_times[k], full) << ' ' << fmt(G.values[k], full) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage instrumental-variable estimation for additive "
               "subdistribution hazard models with competing risks"};
  app.require_subcommand(1);

  std::string input, out, artifact_path, baseline_path, influence_path;
  std::vector<std::string> schema_kv;
  bool naive = false, full = false;
  double level = 0.95;
  std::optional<double> tau;

  auto* fit = app.add_subcommand("fit", "Fit the model to a CSV dataset");
  fit->add_option("--input", input, "CSV input file")->required();
  fit->add_option("--schema", schema_kv,
                  "Column mapping, e.g. time=followup status=event");
  fit->add_flag("--naive", naive, "Regress on observed exposure (no IV)");
  fit->add_flag("--iv", "Two-stage IV fit (default)");
  fit->add_option("--tau", tau, "Upper time limit (default: last cause event)");
  fit->add_option("--level", level, "Confidence level")->default_val(0.95);
  fit->add_option("--out", out, "Report file (default: stdout)");
  fit->add_option("--artifact", artifact_path, "Save the fit for predict");
  fit->add_option("--dump-baseline", baseline_path, "Write baseline CSV");
  fit->add_option("--dump-influence", influence_path,
                  "Write per-subject influence CSV");
  fit->add_flag("--full-precision", full, "Print 17 significant digits");

  double exposure = 0.0;
  std::vector<double> covariates, times;
  int grid_points = 0;
  auto* predict = app.add_subcommand("predict",
                                     "Cumulative incidence from a saved fit");
  predict->add_option("--artifact", artifact_path, "Fit artifact")->required();
  predict->add_option("--exposure", exposure, "Exposure value")->required();
  predict->add_option("--covariates", covariates, "Covariate values");
  predict->add_option("--times", times, "Evaluation times");
  predict->add_option("--grid", grid_points, "Evaluate on a uniform grid");
  predict->add_option("--input", input, "Original CSV, checked against digest");
  predict->add_option("--level", level, "Confidence level")->default_val(0.95);
  predict->add_option("--out", out, "Output file (default: stdout)");
  predict->add_flag("--full-precision", full, "Print 17 significant digits");

  SimScenario scenario;
  std::vector<int> sim_n{scenario.n};
  std::vector<double> sim_gamma2{scenario.gamma2}, sim_beta_u{scenario.beta_u};
  std::string link = "linear";
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  simulate->add_option("--n", sim_n, "Sample sizes");
  simulate->add_option("--gamma2", sim_gamma2, "Instrument strengths");
  simulate->add_option("--beta-u", sim_beta_u, "Confounding strengths");
  simulate->add_option("--beta-e", scenario.beta_e, "True exposure effect");
  simulate->add_option("--beta-o", scenario.beta_o, "Covariate effect");
  simulate->add_option("--censoring", scenario.target_censoring,
                       "Target censoring fraction");
  simulate->add_option("--link", link, "Exposure link: linear or logistic")
      ->check(CLI::IsMember({"linear", "logistic"}));
  simulate->add_option("--reps", scenario.reps, "Replicates");
  simulate->add_option("--seed", scenario.seed, "Master seed");
  simulate->add_option("--workers", scenario.workers, "Worker threads (0=auto)");
  simulate->add_option("--level", scenario.ci_level, "Confidence level");
  simulate->add_option("--out", out, "Output file (default: stdout)");
  simulate->add_flag("--full-precision", full, "Print 17 significant digits");

  auto* km = app.add_subcommand("km", "Censoring survival curve (time, G)");
  km->add_option("--input", input, "CSV input file")->required();
  km->add_option("--schema", schema_kv, "Column mapping");
  km->add_option("--out", out, "Output file (default: stdout)");
  km->add_flag("--full-precision", full, "Print 17 significant digits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ivcr::ExitCode::usage);
  }

  try {
    if (fit->parsed()) {
      return run_fit_cmd(input, schema_kv, naive, tau, level, out,
                         artifact_path, baseline_path, influence_path, full);
    }
    if (predict->parsed()) {
      return run_predict_cmd(artifact_path, exposure, covariates, times,
                             grid_points, input, level, out, full);
    }
    if (simulate->parsed()) {
      scenario.link = link == "logistic" ? ExposureLink::logistic
                                         : ExposureLink::linear;
      return run_simulate_cmd(scenario, sim_n, sim_gamma2, sim_beta_u, out,
                              full);
    }
    if (km->parsed()) {
      return run_km_cmd(input, schema_kv, out, full);
    }
  } catch (const ivcr::Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ivcr::ExitCode::numerical);
  }
  return 0;
}
