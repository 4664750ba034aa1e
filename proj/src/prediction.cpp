#include "ivcr/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ivcr {

namespace {

constexpr const char* kModule = "prediction";

/// Value of a cumulative step process at t (largest jump time <= t).
template <typename Get>
auto step_at(const std::vector<double>& times, double t, Get get)
    -> decltype(get(0)) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return decltype(get(0))(get(-1));
  return get(static_cast<int>(it - times.begin()) - 1);
}

Eigen::VectorXd recentered_contrast(const SubdistFit& fit, double x_e,
                                    const std::vector<double>& x_o) {
  if (static_cast<int>(x_o.size()) != fit.p) {
    throw UsageError(kModule, "expected " + std::to_string(fit.p) +
                                  " covariate values, got " +
                                  std::to_string(x_o.size()));
  }
  Eigen::VectorXd c(fit.p + 1);
  // offsets layout: instrument, exposure, covariates.
  const bool have = fit.offsets.size() == static_cast<std::size_t>(fit.p) + 2;
  c(0) = x_e - (have ? fit.offsets[1] : 0.0);
  for (int j = 0; j < fit.p; ++j)
    c(1 + j) = x_o[j] - (have ? fit.offsets[2 + j] : 0.0);
  return c;
}

}  // namespace

double CifCovariancePieces::g_at(double t) const {
  return step_at(times, t, [&](int k) { return k < 0 ? 0.0 : g_hat[k]; });
}

Eigen::VectorXd CifCovariancePieces::gamma_at(double t) const {
  const int d = static_cast<int>(gamma_hat.rows());
  return step_at(times, t, [&](int k) {
    return k < 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(d))
                 : Eigen::VectorXd(gamma_hat.col(k));
  });
}

CifCovariancePieces cif_covariance_pieces(const SubdistFit& fit) {
  CifCovariancePieces pieces;
  const int d = static_cast<int>(fit.beta.size());
  const int m = static_cast<int>(fit.merged_times.size());

  double g = 0.0;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(d);
  std::vector<Eigen::VectorXd> cols;
  for (int k = 0; k < m; ++k) {
    if (fit.event_count[k] == 0) continue;
    const double e = static_cast<double>(fit.event_count[k]);
    g += fit.n * e / (fit.d0[k] * fit.d0[k]);
    gamma += fit.event_csum.col(k) / fit.d0[k];
    pieces.times.push_back(fit.merged_times[k]);
    pieces.g_hat.push_back(g);
    cols.push_back(gamma);
  }
  pieces.gamma_hat.resize(d, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    pieces.gamma_hat.col(static_cast<Eigen::Index>(k)) = cols[k];
  return pieces;
}

CifCurve predict_cif(const SubdistFit& fit, double x_e,
                     const std::vector<double>& x_o,
                     const std::vector<double>& times) {
  const Eigen::VectorXd c = recentered_contrast(fit, x_e, x_o);
  const double slope = fit.beta.dot(c);

  CifCurve curve;
  curve.times = times;
  curve.values.reserve(times.size());
  double prev = -std::numeric_limits<double>::infinity();
  for (double t : times) {
    if (!(t >= 0.0) || t > fit.tau) {
      throw UsageError(kModule,
                       "prediction times must lie in [0, tau]; tau = " +
                           std::to_string(fit.tau));
    }
    double f = 1.0 - std::exp(-(fit.h0_mod.at(t) + t * slope));
    if (f < 0.0 || f >= 1.0) {
      curve.warn_out_of_range = true;
      f = std::clamp(f, 0.0, std::nextafter(1.0, 0.0));
    }
    if (f < prev) curve.warn_nonmonotone = true;
    prev = f;
    curve.values.push_back(f);
  }
  return curve;
}

double cif_covariance(const SubdistFit& fit, const VarianceComponents& variance,
                      const CifCovariancePieces& pieces, double x_e,
                      const std::vector<double>& x_o, double s, double t) {
  const Eigen::VectorXd c = recentered_contrast(fit, x_e, x_o);
  const double slope = fit.beta.dot(c);
  const double fs = 1.0 - std::exp(-(fit.h0_mod.at(s) + s * slope));
  const double ft = 1.0 - std::exp(-(fit.h0_mod.at(t) + t * slope));

  const int d = static_cast<int>(fit.beta.size());
  const Eigen::MatrixXd s2inv =
      fit.s2n.ldlt().solve(Eigen::MatrixXd::Identity(d, d));

  const double base = pieces.g_at(std::min(s, t));
  const double beta_part =
      s * t * static_cast<double>(fit.n) *
      (c.transpose() * variance.covariance * c).value();
  const double cross =
      (c.transpose() * s2inv *
       (pieces.gamma_at(t) * s + pieces.gamma_at(s) * t))
          .value();
  return (1.0 - ft) * (1.0 - fs) * (base + beta_part + cross);
}

void cif_bands(CifCurve& curve, const SubdistFit& fit,
               const VarianceComponents& variance,
               const CifCovariancePieces& pieces, double x_e,
               const std::vector<double>& x_o, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError(kModule, "confidence level must lie in (0, 1)");
  }
  curve.level = level;
  const double zq = normal_quantile(0.5 + level / 2.0);

  curve.se.clear();
  curve.lower.clear();
  curve.upper.clear();
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    const double t = curve.times[i];
    const double f = curve.values[i];
    const double k = cif_covariance(fit, variance, pieces, x_e, x_o, t, t);
    const double se = std::sqrt(std::max(0.0, k) / fit.n);
    curve.se.push_back(se);
    if (f <= 0.0 || se == 0.0) {
      curve.lower.push_back(f <= 0.0 ? 0.0 : f);
      curve.upper.push_back(f <= 0.0 ? 0.0 : f);
      continue;
    }
    // Symmetric interval on log(-log(1 - F)); back-transformed bounds stay
    // inside (0, 1).
    const double theta = std::log(-std::log1p(-f));
    const double se_theta = se / ((1.0 - f) * (-std::log1p(-f)));
    curve.lower.push_back(1.0 - std::exp(-std::exp(theta - zq * se_theta)));
    curve.upper.push_back(1.0 - std::exp(-std::exp(theta + zq * se_theta)));
  }
}

}  // namespace ivcr
