#pragma once

#include <Eigen/Dense>
#include <string>

#include "ivcr/data.hpp"

namespace ivcr {

/// Ordinary least squares of exposure on (1, instrument, covariates).
struct FirstStageFit {
  Eigen::VectorXd gamma;       // (p+2): intercept, instrument, covariates
  Eigen::VectorXd gamma_se;
  Eigen::VectorXd fitted;      // n
  Eigen::VectorXd residuals;   // n
  double sigma2_hat = 0.0;     // RSS / (n - p - 2)
  double f_stat = 0.0;         // F test of the instrument coefficient
  Eigen::MatrixXd x_ioe;       // (p+1) x (p+2) contrast matrix
  Eigen::MatrixXd design;      // n x (p+2) design [1, X_I, X_o]
  Eigen::MatrixXd xtx_inv;     // (X'X)^-1
  Eigen::VectorXd leverage;    // x_i' (X'X)^-1 x_i per subject
};

/// Fits the first-stage regression. Throws NumericalError naming the
/// offending column when the design is rank deficient (condition > 1e12).
FirstStageFit fit_first_stage(const Dataset& data);

struct WeakIvReport {
  double f_stat = 0.0;
  bool weak = false;  // f_stat <= 10, boundary counted as weak
  std::string advice;
};

WeakIvReport weak_iv_diagnostic(const FirstStageFit& fit);

}  // namespace ivcr
