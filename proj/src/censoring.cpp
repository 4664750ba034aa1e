#include "ivcr/censoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ivcr {

namespace {
constexpr const char* kModule = "censoring_ipcw";
}

double CensoringSurvival::at(double t) const {
  // product over censoring times strictly less than t
  auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double CensoringSurvival::after(double t) const {
  auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

void CensoringSurvival::require_positive(double tau) const {
  if (at(tau) <= 0.0) {
    throw NumericalError(kModule,
                         "censoring survival reaches 0 at or before tau; "
                         "reduce tau");
  }
}

CensoringSurvival fit_km_censoring(const Dataset& data) {
  if (data.subjects.empty()) throw DataError(kModule, "empty dataset");

  // Reversed problem: censorings are the events. Ties at a time keep
  // failing subjects in the censoring risk set (failures precede
  // censorings).
  std::map<double, int> censored_at;
  std::vector<double> times;
  times.reserve(data.size());
  for (const auto& s : data.subjects) {
    times.push_back(s.time);
    if (s.status == 0) censored_at[s.time] += 1;
  }
  std::sort(times.begin(), times.end());

  CensoringSurvival G;
  G.max_observed_time = times.empty() ? 0.0 : times.back();
  double surv = 1.0;
  for (const auto& [t, d] : censored_at) {
    auto at_risk = times.end() - std::lower_bound(times.begin(), times.end(), t);
    surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    G.jump_times.push_back(t);
    G.values.push_back(surv);
    G.risk_counts.push_back(static_cast<int>(at_risk));
    G.censor_counts.push_back(d);
  }
  return G;
}

double IpcwProcesses::weight(std::size_t i, double t) const {
  const double g_ref = censoring.at(std::min(time[i], t));
  if (g_ref <= 0.0) {
    throw NumericalError(kModule, "IPCW weight undefined: G(T_i ^ t) = 0");
  }
  if (kind[i] == Kind::censored) {
    return t > time[i] ? 0.0 : 1.0;
  }
  return censoring.at(t) / g_ref;
}

double IpcwProcesses::at_risk(std::size_t i, double t) const {
  switch (kind[i]) {
    case Kind::cause:
      return t > time[i] ? 0.0 : 1.0;
    case Kind::censored:
      return t > time[i] ? 0.0 : 1.0;
    case Kind::competing:
      if (t <= time[i]) return 1.0;
      if (g_at_time[i] <= 0.0) {
        throw NumericalError(kModule, "IPCW weight undefined: G(T_i) = 0");
      }
      return censoring.at(t) / g_at_time[i];
  }
  return 0.0;
}

IpcwProcesses build_ipcw(const Dataset& data, const CensoringSurvival& G) {
  IpcwProcesses out;
  out.censoring = G;
  out.kind.reserve(data.size());
  out.time.reserve(data.size());
  out.g_at_time.reserve(data.size());
  for (const auto& s : data.subjects) {
    if (s.status == 0) {
      out.kind.push_back(IpcwProcesses::Kind::censored);
    } else if (s.status == data.cause_of_interest) {
      out.kind.push_back(IpcwProcesses::Kind::cause);
    } else {
      out.kind.push_back(IpcwProcesses::Kind::competing);
    }
    out.time.push_back(s.time);
    out.g_at_time.push_back(G.at(s.time));
  }
  return out;
}

}  // namespace ivcr
