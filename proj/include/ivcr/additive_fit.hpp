#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ivcr/censoring.hpp"
#include "ivcr/data.hpp"
#include "ivcr/first_stage.hpp"

namespace ivcr {

enum class FitMode { iv, naive };

/// Right-continuous step function: value at the largest jump time <= t,
/// zero before the first jump.
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;
  double at(double t) const;
};

/// Second-stage fit of the additive subdistribution hazard model.
///
/// All integrals are exact Riemann-Stieltjes sums on the merged grid of
/// observed times up to tau; the per-grid summaries retained here are what
/// the influence-function and prediction machinery consume.
struct SubdistFit {
  FitMode mode = FitMode::iv;
  int n = 0;
  int p = 0;
  double tau = 0.0;
  double ci_level = 0.95;

  Eigen::VectorXd beta;  // (p+1): exposure first, then covariates
  Eigen::VectorXd s1n;
  Eigen::MatrixXd s2n;

  std::vector<double> grid;  // distinct cause event times <= tau
  StepFunction h0_star;      // may be locally decreasing
  StepFunction h0_mod;       // running maximum of h0_star

  // Merged-grid summaries (internal to the fit pipeline).
  std::vector<double> merged_times;   // distinct observed times <= tau, tau last
  std::vector<double> gap;            // merged_times[k] - merged_times[k-1]
  std::vector<double> g_left;         // G(t_k) left limit
  std::vector<double> d0;             // sum_j Yhat_j^2(t_k)
  Eigen::MatrixXd xbar;               // (p+1) x m weighted covariate means
  std::vector<int> event_count;       // cause events at t_k
  Eigen::MatrixXd event_csum;         // (p+1) x m sum of contrasts over events
  std::vector<Eigen::MatrixXd> event_ccsum;  // per k, sum of c c' over events
  std::vector<double> dh0;            // baseline increment at t_k (atom + dt)

  // Leverage-weighted analogues for the Sigma_tau diagnostic (IV mode).
  std::vector<double> d0_lev;
  Eigen::MatrixXd d1_lev;
  std::vector<Eigen::MatrixXd> d2_lev;

  Eigen::MatrixXd contrasts;          // n x (p+1) rows c_i
  std::vector<int> grid_index;        // index of subject's time, -1 if > tau
  std::vector<IpcwProcesses::Kind> kind;
  std::vector<double> subject_time;
  std::vector<double> g_subject;      // G(T_i) per subject
  Eigen::MatrixXd cross_b;            // (p+1) x (p+2) first-stage coupling (IV)
  double sigma2_first = 0.0;          // first-stage residual variance (IV)
  std::vector<double> offsets;        // centering offsets carried from data

  int exposure_index() const noexcept { return 0; }
};

/// Two-stage IV fit: regresses on (fitted exposure, covariates).
SubdistFit fit_iv(const Dataset& data, const FirstStageFit& first,
                  const IpcwProcesses& ipcw, const FitOptions& opts = {});

/// Naive comparator: identical computation on (observed exposure, covariates).
SubdistFit fit_naive(const Dataset& data, const IpcwProcesses& ipcw,
                     const FitOptions& opts = {});

/// Baseline cumulative hazard H0*(t) on the cause-event grid, with the dt
/// term accumulated over inter-grid gaps.
StepFunction estimate_baseline(const SubdistFit& fit);

/// Running maximum of the baseline, nondecreasing by construction.
StepFunction monotone_baseline(const StepFunction& h0_star);

}  // namespace ivcr
