#pragma once

#include <vector>

#include "ivcr/data.hpp"

namespace ivcr {

/// Product-limit estimate of the censoring survival G(t) = P(C >= t),
/// obtained by reversing the roles of failure and censoring.
///
/// G is left-continuous: evaluation at t multiplies the factors of all
/// censoring times strictly less than t, so a subject observed at time T
/// always has G(T) > 0 and carries IPCW weight 1 at its own event.
struct CensoringSurvival {
  std::vector<double> jump_times;    // distinct censoring times, ascending
  std::vector<double> values;        // G just after each jump
  std::vector<int> risk_counts;      // subjects with follow-up >= jump time
  std::vector<int> censor_counts;    // censorings at the jump time
  double max_observed_time = 0.0;

  /// Left limit P(C >= t).
  double at(double t) const;
  /// Value just after t (product over jumps <= t).
  double after(double t) const;
  /// Throws if G vanishes anywhere on [0, tau].
  void require_positive(double tau) const;
};

CensoringSurvival fit_km_censoring(const Dataset& data);

/// IPCW processes R-hat_i(t) = r_i(t) G(t) / G(T_i ^ t) and
/// Y-hat_i(t) = R-hat_i(t) Y_i(t), evaluated exactly from the censoring
/// step function. Values are exact at every point of the merged grid of
/// observed times.
struct IpcwProcesses {
  enum class Kind { cause, competing, censored };

  CensoringSurvival censoring;
  std::vector<Kind> kind;
  std::vector<double> time;        // follow-up time per subject
  std::vector<double> g_at_time;   // G(T_i), left limit

  /// R-hat_i(t). Throws if G(T_i ^ t) = 0 (weight undefined).
  double weight(std::size_t i, double t) const;
  /// Y-hat_i(t), using the left limit Y_i(t) = 1 - N_i(t-).
  double at_risk(std::size_t i, double t) const;
};

IpcwProcesses build_ipcw(const Dataset& data, const CensoringSurvival& G);

}  // namespace ivcr
