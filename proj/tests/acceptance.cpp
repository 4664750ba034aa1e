// End-to-end acceptance checks: Monte Carlo reproduction of the published
// simulation table at desk scale, oracle equivalences, variance calibration,
// cumulative-incidence accuracy, and the CSV pipeline round trip. Tolerances
// are pinned here, not configurable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "ivcr/artifact.hpp"
#include "ivcr/pipeline.hpp"
#include "ivcr/prediction.hpp"
#include "ivcr/simulate.hpp"

using namespace ivcr;

namespace {

SimScenario table_scenario(int n, double gamma2, double beta_u, int reps) {
  SimScenario s;
  s.n = n;
  s.gamma2 = gamma2;
  s.beta_u = beta_u;
  s.target_censoring = 0.30;
  s.reps = reps;
  s.seed = 20240811;
  return s;
}

void report(const char* label, const MethodSummary& m) {
  std::printf("%s: bias=%+.4f emp_se=%.4f mean_se=%.4f cr=%.3f fail=%d\n",
              label, m.bias, m.empirical_se, m.mean_sandwich_se, m.coverage,
              m.failures);
}

template <typename Fn>
void parallel_reps(int reps, Fn&& body) {
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      body(r);
    }
  };
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
}

}  // namespace

// Strong instrument / strong confounding, n=1000, 30% censoring, 1000
// replicates: the IV estimator is nearly unbiased with calibrated coverage
// while the unadjusted regression carries its characteristic negative bias
// and collapsed coverage.
TEST_CASE("criterion_1") {
  SimResult r = run_monte_carlo(table_scenario(1000, 0.4, 0.4, 1000));
  report("iv", r.iv);
  report("naive", r.naive);
  CHECK(std::fabs(r.iv.bias - 0.03) <= 0.05);
  CHECK(r.iv.empirical_se >= 0.23 * 0.8);
  CHECK(r.iv.empirical_se <= 0.23 * 1.2);
  CHECK(r.iv.coverage >= 0.91);
  CHECK(r.iv.coverage <= 0.98);
  CHECK(std::fabs(r.naive.bias - (-0.27)) <= 0.05);
  CHECK(r.naive.coverage <= 0.55);
}

// No confounding / strong instrument, n=400: both methods are unbiased with
// nominal coverage.
TEST_CASE("criterion_2") {
  SimResult r = run_monte_carlo(table_scenario(400, 0.4, 0.0, 1000));
  report("iv", r.iv);
  report("naive", r.naive);
  CHECK(std::fabs(r.iv.bias) <= 0.05);
  CHECK(std::fabs(r.naive.bias) <= 0.05);
  CHECK(r.iv.coverage >= 0.91);
  CHECK(r.iv.coverage <= 0.99);
  CHECK(r.naive.coverage >= 0.91);
  CHECK(r.naive.coverage <= 0.99);
}

// Null instrument: the IV estimator blows up (failures or an extreme
// empirical SE) and the first-stage F diagnostic flags nearly every
// replicate as weak.
TEST_CASE("criterion_3") {
  SimResult r = run_monte_carlo(table_scenario(1000, 0.0, 0.4, 500));
  report("iv", r.iv);
  std::printf("weak_flag_rate=%.3f failures=%d\n", r.weak_flag_rate,
              r.iv.failures);
  CHECK((r.iv.failures > 0 || r.iv.empirical_se > 5.0));
  CHECK(r.weak_flag_rate >= 0.95);
}

// Misspecified (logistic) exposure link at the registry-like sample size:
// coverage stays at or above 90% despite a nonzero bias; the bias sign is
// reported.
TEST_CASE("criterion_4") {
  SimScenario s = table_scenario(986, 0.4, 0.4, 500);
  s.link = ExposureLink::logistic;
  s.seed = 77;
  SimResult r = run_monte_carlo(s);
  report("iv", r.iv);
  report("naive", r.naive);
  std::printf("logistic-link iv bias sign: %s (%.4f)\n",
              r.iv.bias < 0 ? "negative" : "positive", r.iv.bias);
  CHECK(r.iv.coverage >= 0.90);
  CHECK(r.iv.bias != 0.0);
}

// Oracle equivalences: hand product-limit censoring survival, brute-force
// root of the estimating equations on small samples, prefix-max baseline.
TEST_CASE("criterion_5") {
  // censoring survival against the hand product-limit values
  Dataset km = testutil::dataset_from({1, 2, 3}, {0, 1, 0});
  CensoringSurvival g = fit_km_censoring(km);
  CHECK(std::fabs(g.at(1.5) - 2.0 / 3.0) < 1e-14);
  CHECK(std::fabs(g.at(3.0) - 2.0 / 3.0) < 1e-14);
  CHECK(g.at(0.5) == 1.0);

  // closed-form coefficients against an independent evaluation of the
  // estimating function: U is affine in beta, so the root is recovered from
  // dim+1 brute-force evaluations with direct loops
  int tested = 0;
  for (std::uint64_t seed = 1; seed <= 60 && tested < 10; ++seed) {
    const int p = static_cast<int>(seed % 2);
    Dataset raw = testutil::random_dataset(6, p, 4000 + seed);
    Dataset d;
    SubdistFit fit;
    IpcwProcesses w;
    try {
      validate(raw);
      d = center(raw);
      w = build_ipcw(d, fit_km_censoring(d));
      fit = fit_naive(d, w);
    } catch (const Error&) {
      continue;
    }
    const int dim = p + 1;
    Eigen::MatrixXd contrasts(d.size(), dim);
    for (std::size_t i = 0; i < d.size(); ++i) {
      contrasts(i, 0) = d.subjects[i].exposure;
      for (int j = 0; j < p; ++j)
        contrasts(i, 1 + j) = d.subjects[i].covariates[j];
    }
    auto estimating_fn = [&](const Eigen::VectorXd& beta) {
      std::vector<double> grid;
      for (const auto& s : d.subjects)
        if (s.time <= fit.tau) grid.push_back(s.time);
      grid.push_back(fit.tau);
      std::sort(grid.begin(), grid.end());
      grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
      Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
      double prev = 0.0;
      for (double tk : grid) {
        const double gap = tk - prev;
        prev = tk;
        double den = 0.0, datom = 0.0, drift = 0.0;
        Eigen::VectorXd num = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double y = w.at_risk(i, tk);
          den += y * y;
          num += y * y * contrasts.row(i).transpose();
          drift += y * y * contrasts.row(i).dot(beta) * gap;
          if (d.subjects[i].status == 1 && d.subjects[i].time == tk)
            datom += w.weight(i, tk);
        }
        if (den <= 0.0) continue;
        const Eigen::VectorXd xbar = num / den;
        const double dh0 = (datom - drift) / den;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const Eigen::VectorXd c = contrasts.row(i).transpose() - xbar;
          const double y = w.at_risk(i, tk);
          if (d.subjects[i].status == 1 && d.subjects[i].time == tk)
            u += c * w.weight(i, tk);
          u -= c * y * y * (contrasts.row(i).dot(beta) * gap + dh0);
        }
      }
      return u;
    };
    const Eigen::VectorXd u0 = estimating_fn(Eigen::VectorXd::Zero(dim));
    Eigen::MatrixXd a(dim, dim);
    for (int j = 0; j < dim; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
      e(j) = 1.0;
      a.col(j) = u0 - estimating_fn(e);
    }
    Eigen::VectorXd root = a.fullPivLu().solve(u0);
    CHECK((fit.beta - root).lpNorm<Eigen::Infinity>() < 1e-6);
    ++tested;
  }
  REQUIRE(tested >= 8);

  // monotone baseline equals the brute-force prefix maximum exactly
  Dataset d = testutil::random_dataset(80, 1, 5005);
  FitResult r = run_fit(d, FitMode::naive);
  double best = -1e300;
  for (std::size_t k = 0; k < r.fit.h0_star.values.size(); ++k) {
    best = std::max(best, r.fit.h0_star.values[k]);
    CHECK(r.fit.h0_mod.values[k] == best);
  }
}

// Variance calibration: the mean sandwich SE tracks the Monte Carlo SD of
// the exposure coefficient, the estimating-equation residual vanishes at
// the fitted coefficients, and reported covariances are symmetric PSD.
TEST_CASE("criterion_6") {
  SimResult r = run_monte_carlo(table_scenario(1000, 0.4, 0.4, 500));
  report("iv", r.iv);
  CHECK(r.iv.mean_sandwich_se >= 0.85 * r.iv.empirical_se);
  CHECK(r.iv.mean_sandwich_se <= 1.15 * r.iv.empirical_se);

  SimScenario s = table_scenario(1000, 0.4, 0.4, 1);
  const double rate = calibrate_censoring(s);
  for (int rep = 0; rep < 5; ++rep) {
    Dataset d = generate_replicate(s, 100 + rep, rate);
    FitOptions opts;
    opts.tau = s.t0;
    for (auto mode : {FitMode::iv, FitMode::naive}) {
      FitResult f = run_fit(d, mode, opts);
      Eigen::VectorXd resid = f.influence.phi1.colwise().sum();
      CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-8);
      const Eigen::MatrixXd& c = f.variance.covariance;
      CHECK((c - c.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * c.trace());
    }
  }
}

// Cumulative incidence accuracy: the fitted curve at the covariate origin
// tracks the generating-process truth p(1 - e^{-t}) in sup-norm, and the
// pointwise bands at t=1 hold their coverage.
TEST_CASE("criterion_7") {
  SimScenario s;
  s.beta_u = 0.0;
  s.gamma2 = 0.4;
  s.seed = 99;
  const double rate = calibrate_censoring(s);
  const double p = s.p_mix;

  // sup-norm of the 200-replicate mean curve on [0, 2] at n = 2000
  {
    SimScenario sc = s;
    sc.n = 2000;
    const int reps = 200;
    std::vector<double> times;
    for (int k = 0; k <= 40; ++k) times.push_back(std::min(0.05 * k, 2.0));
    std::vector<std::vector<double>> vals(reps);
    parallel_reps(reps, [&](int rep) {
      Dataset d = generate_replicate(sc, rep, rate);
      FitOptions opts;
      opts.tau = 2.0;
      FitResult f = run_fit(d, FitMode::iv, opts);
      vals[rep] = predict_cif(f.fit, 0.0, {0.0}, times).values;
    });
    double sup = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      double mean = 0.0;
      for (int rep = 0; rep < reps; ++rep) mean += vals[rep][k] / reps;
      sup = std::max(sup, std::fabs(mean - p * (1.0 - std::exp(-times[k]))));
    }
    std::printf("cif sup-norm on [0,2]: %.4f\n", sup);
    CHECK(sup <= 0.03);
  }

  // pointwise 95% band coverage of the truth at t = 1, n = 400
  {
    SimScenario sc = s;
    sc.n = 400;
    const int reps = 1000;
    const double truth = p * (1.0 - std::exp(-1.0));
    std::atomic<int> covered{0}, failures{0};
    parallel_reps(reps, [&](int rep) {
      try {
        Dataset d = generate_replicate(sc, rep, rate);
        FitOptions opts;
        opts.tau = 2.0;
        FitResult f = run_fit(d, FitMode::iv, opts);
        CifCurve c = predict_cif(f.fit, 0.0, {0.0}, {1.0});
        cif_bands(c, f.fit, f.variance, cif_covariance_pieces(f.fit), 0.0,
                  {0.0}, 0.95);
        if (c.lower[0] <= truth && truth <= c.upper[0]) ++covered;
      } catch (const Error&) {
        ++failures;
      }
    });
    const double cover =
        static_cast<double>(covered) / (reps - failures.load());
    std::printf("band coverage at t=1: %.3f (failures %d)\n", cover,
                failures.load());
    CHECK(cover >= 0.92);
    CHECK(cover <= 0.99);
  }
}

// Registry-shaped CSV pipeline: 994 rows, binary exposure and instrument,
// 3 covariates, run through load -> fit -> artifact -> predict.
TEST_CASE("criterion_8") {
  const std::string csv = "acceptance_registry.csv";
  const std::string art = "acceptance_registry.fit.json";
  write_dataset_file(csv, synthetic_registry_like(994, 3, 20240811));
  Dataset d = load_dataset_file(csv);
  REQUIRE(d.size() == 994);
  REQUIRE(d.p == 3);
  FitResult r = run_fit(d, FitMode::iv);
  save_artifact(art, make_artifact(r, digest_file(csv)));
  FitArtifact a = load_artifact(art);
  CHECK(a.input_digest == digest_file(csv));
  std::vector<double> times;
  for (int k = 1; k <= 8; ++k) times.push_back(k * a.fit.tau / 8.0);
  CifCurve c = predict_cif(a.fit, 1.0, {0.0, 0.0, 0.0}, times);
  cif_bands(c, a.fit, a.variance, a.pieces, 1.0, {0.0, 0.0, 0.0}, 0.95);
  for (std::size_t k = 0; k < times.size(); ++k) {
    CHECK(std::isfinite(c.values[k]));
    CHECK(c.lower[k] >= 0.0);
    CHECK(c.upper[k] < 1.0);
    CHECK(c.se[k] >= 0.0);
  }
  std::remove(csv.c_str());
  std::remove(art.c_str());
}
