#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ivcr/additive_fit.hpp"

namespace ivcr {

/// Per-subject influence decomposition: phi1 (estimating-equation
/// martingale), phi2 (first-stage least squares), phi3 (censoring
/// Kaplan-Meier). Rows are subjects.
struct InfluenceRecords {
  Eigen::MatrixXd phi1;
  Eigen::MatrixXd phi2;
  Eigen::MatrixXd phi3;
  Eigen::MatrixXd phi;  // phi1 + phi2 + phi3
};

/// Sandwich pieces. `covariance` is the variance of beta-hat; omega, psi
/// and sigma are the plug-in component matrices reported for diagnostics.
struct VarianceComponents {
  Eigen::MatrixXd omega;
  Eigen::MatrixXd psi;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd covariance;
};

/// `first` may be null for naive fits (phi2 is then identically zero).
InfluenceRecords influence_functions(const SubdistFit& fit,
                                     const FirstStageFit* first,
                                     const IpcwProcesses& ipcw);

VarianceComponents sandwich_variance(const InfluenceRecords& records,
                                     const SubdistFit& fit);

struct CoefSummary {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool degenerate = false;  // zero SE, infinite z
};

std::vector<CoefSummary> wald_summary(const SubdistFit& fit,
                                      const VarianceComponents& variance,
                                      double level,
                                      const std::vector<std::string>& names = {});

/// Standard normal quantile (Acklam/Wichura style rational approximation,
/// refined by one Halley step; accurate to full double precision).
double normal_quantile(double prob);
double normal_cdf(double x);

}  // namespace ivcr
