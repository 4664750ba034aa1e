#include "ivcr/first_stage.hpp"

#include <cmath>
#include <limits>

namespace ivcr {

namespace {

constexpr const char* kModule = "first_stage";
constexpr double kConditionLimit = 1e12;

/// Best-effort identification of the column making the design singular:
/// the one most nearly in the span of the others.
std::string offending_column(const Eigen::MatrixXd& X, int p) {
  int worst = -1;
  double worst_rel = std::numeric_limits<double>::infinity();
  for (int c = 0; c < X.cols(); ++c) {
    Eigen::MatrixXd others(X.rows(), X.cols() - 1);
    int k = 0;
    for (int j = 0; j < X.cols(); ++j)
      if (j != c) others.col(k++) = X.col(j);
    Eigen::VectorXd resid = X.col(c) - others * others.colPivHouseholderQr().solve(X.col(c));
    double scale = X.col(c).norm();
    double rel = scale > 0 ? resid.norm() / scale : 0.0;
    if (rel < worst_rel) {
      worst_rel = rel;
      worst = c;
    }
  }
  if (worst == 0) return "intercept";
  if (worst == 1) return "instrument";
  return "covariate " + std::to_string(worst - 1) + " of " + std::to_string(p);
}

}  // namespace

FirstStageFit fit_first_stage(const Dataset& data) {
  const int n = static_cast<int>(data.size());
  const int p = data.p;
  const int q = p + 2;
  if (n <= q) {
    throw DataError(kModule, "need n > p + 2 subjects for the first stage");
  }

  Eigen::MatrixXd X(n, q);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const auto& s = data.subjects[i];
    X(i, 0) = 1.0;
    X(i, 1) = s.instrument;
    for (int j = 0; j < p; ++j) X(i, 2 + j) = s.covariates[j];
    y(i) = s.exposure;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(q - 1);
  if (!(smin > 0.0) || smax / smin > kConditionLimit) {
    throw NumericalError(kModule, "singular design matrix (condition > 1e12); "
                                  "offending column: " + offending_column(X, p));
  }

  FirstStageFit fit;
  fit.design = X;
  fit.gamma = svd.solve(y);
  fit.fitted = X * fit.gamma;
  fit.residuals = y - fit.fitted;

  const double rss = fit.residuals.squaredNorm();
  fit.sigma2_hat = rss / static_cast<double>(n - q);

  fit.xtx_inv = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(q, q));
  fit.gamma_se.resize(q);
  for (int j = 0; j < q; ++j) fit.gamma_se(j) = std::sqrt(fit.sigma2_hat * fit.xtx_inv(j, j));

  if (fit.sigma2_hat > 0.0) {
    fit.f_stat = fit.gamma(1) * fit.gamma(1) / (fit.sigma2_hat * fit.xtx_inv(1, 1));
  } else {
    fit.f_stat = std::numeric_limits<double>::infinity();
  }

  fit.leverage.resize(n);
  for (int i = 0; i < n; ++i) {
    fit.leverage(i) = X.row(i) * fit.xtx_inv * X.row(i).transpose();
  }

  // X_IOE: top row X_e' X_Io (X_Io' X_Io)^-1 = gamma-hat', lower block [0 0 I_p].
  fit.x_ioe = Eigen::MatrixXd::Zero(p + 1, q);
  fit.x_ioe.row(0) = fit.gamma.transpose();
  for (int j = 0; j < p; ++j) fit.x_ioe(1 + j, 2 + j) = 1.0;

  return fit;
}

WeakIvReport weak_iv_diagnostic(const FirstStageFit& fit) {
  WeakIvReport report;
  report.f_stat = fit.f_stat;
  report.weak = !(fit.f_stat > 10.0);
  if (report.weak) {
    report.advice =
        "first-stage F <= 10: the instrument is weak; IV estimates may be "
        "unstable. Compare against the naive fit before relying on them.";
  } else {
    report.advice =
        "first-stage F > 10: instrument strength is adequate. Comparing IV "
        "and naive fits is still recommended; a large gap indicates "
        "confounding bias in the naive fit.";
  }
  return report;
}

}  // namespace ivcr
