#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ivcr/additive_fit.hpp"
#include "ivcr/inference.hpp"

namespace ivcr {

/// Covariate-specific cumulative incidence curve with pointwise bands.
struct CifCurve {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> se;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
  bool warn_out_of_range = false;   // some value fell outside [0, 1)
  bool warn_nonmonotone = false;    // curve decreases somewhere
};

/// Plug-in ingredients of the Gaussian-process covariance K(s, t):
/// the baseline variance function g and the baseline/coefficient
/// cross-covariance Gamma, both accumulated over cause-event times.
struct CifCovariancePieces {
  std::vector<double> times;      // cause event times <= tau
  std::vector<double> g_hat;
  Eigen::MatrixXd gamma_hat;      // (p+1) x #times, cumulative
  double g_at(double t) const;
  Eigen::VectorXd gamma_at(double t) const;
};

CifCovariancePieces cif_covariance_pieces(const SubdistFit& fit);

/// F-hat_1(t | x_e, x_o) = 1 - exp(-H_mod(t) - t b'(x_e, x_o)).
/// Covariates are supplied on the original scale and re-centered via the
/// offsets stored in the fit. Times beyond tau are an error.
CifCurve predict_cif(const SubdistFit& fit, double x_e,
                     const std::vector<double>& x_o,
                     const std::vector<double>& times);

/// K-hat(s, t) for the process sqrt(n)(F-hat - F); the pointwise standard
/// error of F-hat(t) is sqrt(K(t, t) / n).
double cif_covariance(const SubdistFit& fit, const VarianceComponents& variance,
                      const CifCovariancePieces& pieces, double x_e,
                      const std::vector<double>& x_o, double s, double t);

/// Fills se/lower/upper using symmetric intervals on the log(-log) scale,
/// so the transformed bounds stay inside [0, 1).
void cif_bands(CifCurve& curve, const SubdistFit& fit,
               const VarianceComponents& variance,
               const CifCovariancePieces& pieces, double x_e,
               const std::vector<double>& x_o, double level);

}  // namespace ivcr
