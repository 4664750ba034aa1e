#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "ivcr/pipeline.hpp"
#include "ivcr/prediction.hpp"

using namespace ivcr;

namespace {

/// Minimal hand-built fit: p covariates, given coefficients and a given
/// monotone baseline, zero centering offsets.
SubdistFit toy_fit(const Eigen::VectorXd& beta, const StepFunction& h0,
                   double tau) {
  SubdistFit fit;
  fit.n = 10;
  fit.p = static_cast<int>(beta.size()) - 1;
  fit.tau = tau;
  fit.beta = beta;
  fit.h0_star = h0;
  fit.h0_mod = monotone_baseline(h0);
  fit.offsets.assign(fit.p + 2, 0.0);
  return fit;
}

}  // namespace

TEST_CASE("cif arithmetic: H=0.2, t*beta'x=0.1 gives 1-exp(-0.3)") {
  StepFunction h0;
  h0.times = {1.0};
  h0.values = {0.2};
  Eigen::VectorXd beta(2);
  beta << 0.05, 0.05;  // at t=1 with x=(1,1): t*beta'x = 0.1
  SubdistFit fit = toy_fit(beta, h0, 2.0);
  CifCurve c = predict_cif(fit, 1.0, {1.0}, {1.0});
  CHECK(c.values[0] == doctest::Approx(1.0 - std::exp(-0.3)).epsilon(1e-14));
  CHECK(c.values[0] == doctest::Approx(0.25918).epsilon(1e-4));
}

TEST_CASE("cif is zero at time zero for any covariate value") {
  StepFunction h0;
  h0.times = {0.5, 1.0};
  h0.values = {0.1, 0.4};
  Eigen::VectorXd beta(1);
  beta << 0.7;
  SubdistFit fit = toy_fit(beta, h0, 1.5);
  for (double xe : {-2.0, 0.0, 3.5}) {
    CifCurve c = predict_cif(fit, xe, {}, {0.0});
    CHECK(c.values[0] == 0.0);
  }
}

TEST_CASE("prediction at the centered origin is 1 - exp(-H_mod)") {
  Dataset d = testutil::random_dataset(150, 1, 81);
  FitResult r = run_fit(d, FitMode::iv);
  // the stored offsets are the removed means; supplying them as covariate
  // values recenters to exactly zero contrast
  const double xe = r.fit.offsets[1];
  const std::vector<double> xo = {r.fit.offsets[2]};
  for (double t : {0.2, 0.5, 1.0}) {
    if (t > r.fit.tau) continue;
    CifCurve c = predict_cif(r.fit, xe, xo, {t});
    CHECK(c.values[0] ==
          doctest::Approx(-std::expm1(-r.fit.h0_mod.at(t))).epsilon(1e-12));
  }
}

TEST_CASE("baseline-origin curve is nondecreasing in t") {
  Dataset d = testutil::random_dataset(200, 1, 82);
  FitResult r = run_fit(d, FitMode::naive);
  std::vector<double> times;
  for (double t = 0.0; t <= r.fit.tau; t += r.fit.tau / 50.0) times.push_back(t);
  CifCurve c = predict_cif(r.fit, r.fit.offsets[1], {r.fit.offsets[2]}, times);
  for (std::size_t k = 1; k < c.values.size(); ++k)
    CHECK(c.values[k] >= c.values[k - 1] - 1e-15);
  CHECK(!c.warn_nonmonotone);
}

TEST_CASE("times outside [0, tau] are rejected") {
  StepFunction h0;
  h0.times = {1.0};
  h0.values = {0.2};
  Eigen::VectorXd beta(1);
  beta << 0.1;
  SubdistFit fit = toy_fit(beta, h0, 2.0);
  CHECK_THROWS_AS(predict_cif(fit, 0.0, {}, {2.5}), UsageError);
  CHECK_THROWS_AS(predict_cif(fit, 0.0, {}, {-0.1}), UsageError);
  CHECK_NOTHROW(predict_cif(fit, 0.0, {}, {2.0}));
}

TEST_CASE("covariance pieces: K(0,0)=0 and K is symmetric") {
  Dataset d = testutil::random_dataset(250, 1, 83);
  FitResult r = run_fit(d, FitMode::iv);
  CifCovariancePieces pieces = cif_covariance_pieces(r.fit);
  const double xe = 0.3;
  const std::vector<double> xo = {0.1};
  CHECK(cif_covariance(r.fit, r.variance, pieces, xe, xo, 0.0, 0.0) == 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, r.fit.tau);
  for (int k = 0; k < 20; ++k) {
    const double s = unif(rng), t = unif(rng);
    const double kst = cif_covariance(r.fit, r.variance, pieces, xe, xo, s, t);
    const double kts = cif_covariance(r.fit, r.variance, pieces, xe, xo, t, s);
    CHECK(kst == doctest::Approx(kts).epsilon(1e-12));
  }
  // variance K(t,t) nonnegative on the grid
  for (double t : pieces.times)
    CHECK(cif_covariance(r.fit, r.variance, pieces, xe, xo, t, t) >= -1e-12);
}

TEST_CASE("bands stay inside [0,1), match se = sqrt(K/n), nest across levels") {
  Dataset d = testutil::random_dataset(300, 1, 84);
  FitResult r = run_fit(d, FitMode::iv);
  CifCovariancePieces pieces = cif_covariance_pieces(r.fit);
  const double xe = r.fit.offsets[1] + 0.5;
  const std::vector<double> xo = {r.fit.offsets[2]};
  std::vector<double> times;
  for (double t = 0.0; t <= r.fit.tau; t += r.fit.tau / 20.0) times.push_back(t);

  CifCurve c95 = predict_cif(r.fit, xe, xo, times);
  cif_bands(c95, r.fit, r.variance, pieces, xe, xo, 0.95);
  CifCurve c99 = predict_cif(r.fit, xe, xo, times);
  cif_bands(c99, r.fit, r.variance, pieces, xe, xo, 0.99);

  for (std::size_t k = 0; k < times.size(); ++k) {
    const double kv =
        cif_covariance(r.fit, r.variance, pieces, xe, xo, times[k], times[k]);
    CHECK(c95.se[k] ==
          doctest::Approx(std::sqrt(std::max(kv, 0.0) / r.fit.n)).epsilon(1e-10));
    CHECK(c95.lower[k] >= 0.0);
    CHECK(c95.upper[k] < 1.0);
    CHECK(c95.lower[k] <= c95.values[k] + 1e-14);
    CHECK(c95.upper[k] >= c95.values[k] - 1e-14);
    // wider level contains the narrower one
    CHECK(c99.lower[k] <= c95.lower[k] + 1e-14);
    CHECK(c99.upper[k] >= c95.upper[k] - 1e-14);
  }
  // degenerate at t=0: F=0, se=0, band collapses to a point
  CHECK(c95.values[0] == 0.0);
  CHECK(c95.se[0] == 0.0);
  CHECK(c95.lower[0] == c95.upper[0]);
}

TEST_CASE("strongly negative contrasts flag non-monotone or out-of-range output") {
  StepFunction h0;
  h0.times = {0.5, 1.0, 1.5};
  h0.values = {0.05, 0.1, 0.15};
  Eigen::VectorXd beta(1);
  beta << -1.0;  // dominates the baseline; curve must decrease
  SubdistFit fit = toy_fit(beta, h0, 2.0);
  CifCurve c = predict_cif(fit, 1.0, {}, {0.5, 1.0, 1.5, 2.0});
  CHECK((c.warn_nonmonotone || c.warn_out_of_range));
}
