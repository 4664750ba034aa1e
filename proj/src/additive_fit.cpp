#include "ivcr/additive_fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ivcr {

namespace {

constexpr const char* kModule = "additive_fit";
constexpr double kConditionLimit = 1e12;
constexpr double kRiskFloor = 1e-12;

void solve_beta(SubdistFit& fit) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.s2n);
  const auto& ev = es.eigenvalues();
  const double lmin = ev(0);
  const double lmax = ev(ev.size() - 1);
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) {
    throw NumericalError(kModule,
                         "S2n is singular or near-singular (condition > 1e12): "
                         "the instrument does not identify the exposure effect");
  }
  fit.beta = es.eigenvectors() *
             (es.eigenvectors().transpose() * fit.s1n).cwiseQuotient(ev);
}

SubdistFit fit_engine(const Dataset& data, const IpcwProcesses& ipcw,
                      Eigen::MatrixXd contrasts, const FirstStageFit* first,
                      const FitOptions& opts, FitMode mode) {
  const int n = static_cast<int>(data.size());
  const int d = static_cast<int>(contrasts.cols());  // p + 1

  SubdistFit fit;
  fit.mode = mode;
  fit.n = n;
  fit.p = data.p;
  fit.ci_level = opts.ci_level;
  fit.tau = resolve_tau(data, opts);
  fit.offsets = data.centering_offsets;
  fit.contrasts = std::move(contrasts);
  fit.kind = ipcw.kind;
  fit.subject_time = ipcw.time;
  fit.g_subject = ipcw.g_at_time;

  ipcw.censoring.require_positive(fit.tau);

  // Merged grid of distinct observed times <= tau, with tau as last point.
  std::vector<double>& grid = fit.merged_times;
  for (const auto& s : data.subjects)
    if (s.time <= fit.tau) grid.push_back(s.time);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty() || grid.back() < fit.tau) grid.push_back(fit.tau);
  const int m = static_cast<int>(grid.size());

  fit.grid_index.assign(n, -1);
  std::vector<std::vector<int>> leaving(m);  // subjects leaving after time t_k
  for (int i = 0; i < n; ++i) {
    const double t = data.subjects[i].time;
    if (t > fit.tau) continue;
    const int k = static_cast<int>(
        std::lower_bound(grid.begin(), grid.end(), t) - grid.begin());
    fit.grid_index[i] = k;
    leaving[k].push_back(i);
  }

  const bool with_first = (mode == FitMode::iv);
  if (with_first && first == nullptr) {
    throw NumericalError(kModule, "IV fit requires a first-stage fit");
  }
  const int q = with_first ? static_cast<int>(first->design.cols()) : 0;

  // Sweep state: alive subjects carry weight 1; competing subjects past
  // their own event carry weight (G(t)/G(T_i))^2.
  double alive0 = n;
  Eigen::VectorXd alive1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd alive2 = Eigen::MatrixXd::Zero(d, d);
  double comp0 = 0.0;
  Eigen::VectorXd comp1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd comp2 = Eigen::MatrixXd::Zero(d, d);
  // Leverage-weighted copies (Sigma_tau diagnostic) and first-stage cross
  // sums (phi2 coupling), IV mode only.
  double aliveL0 = 0.0, compL0 = 0.0;
  Eigen::VectorXd aliveL1, compL1;
  Eigen::MatrixXd aliveL2, compL2;
  Eigen::MatrixXd aliveCX, compCX;  // sum c_i x_i'
  Eigen::VectorXd aliveX, compX;    // sum x_i
  if (with_first) {
    aliveL1 = Eigen::VectorXd::Zero(d);
    compL1 = Eigen::VectorXd::Zero(d);
    aliveL2 = Eigen::MatrixXd::Zero(d, d);
    compL2 = Eigen::MatrixXd::Zero(d, d);
    aliveCX = Eigen::MatrixXd::Zero(d, q);
    compCX = Eigen::MatrixXd::Zero(d, q);
    aliveX = Eigen::VectorXd::Zero(q);
    compX = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < n; ++i) {
      const double lev = first->leverage(i);
      aliveL0 += lev;
      aliveL1 += lev * fit.contrasts.row(i).transpose();
      aliveL2 += lev * fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
      aliveCX += fit.contrasts.row(i).transpose() * first->design.row(i);
      aliveX += first->design.row(i).transpose();
    }
    fit.sigma2_first = first->sigma2_hat;
  }
  for (int i = 0; i < n; ++i) {
    alive1 += fit.contrasts.row(i).transpose();
    alive2 += fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
  }

  fit.gap.resize(m);
  fit.g_left.resize(m);
  fit.d0.resize(m);
  fit.xbar.resize(d, m);
  fit.event_count.assign(m, 0);
  fit.event_csum = Eigen::MatrixXd::Zero(d, m);
  fit.event_ccsum.assign(m, Eigen::MatrixXd::Zero(d, d));
  fit.dh0.resize(m);
  if (with_first) {
    fit.d0_lev.resize(m);
    fit.d1_lev = Eigen::MatrixXd::Zero(d, m);
    fit.d2_lev.assign(m, Eigen::MatrixXd::Zero(d, d));
    fit.cross_b = Eigen::MatrixXd::Zero(d, q);
  }

  Eigen::MatrixXd s2_raw = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd s1_raw = Eigen::VectorXd::Zero(d);

  double prev = 0.0;
  for (int k = 0; k < m; ++k) {
    const double t = grid[k];
    fit.gap[k] = t - prev;
    prev = t;

    // Subjects with follow-up strictly before t leave the unit-weight set.
    if (k > 0) {
      for (int i : leaving[k - 1]) {
        alive0 -= 1.0;
        alive1 -= fit.contrasts.row(i).transpose();
        alive2 -= fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
        if (with_first) {
          const double lev = first->leverage(i);
          aliveL0 -= lev;
          aliveL1 -= lev * fit.contrasts.row(i).transpose();
          aliveL2 -= lev * fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
          aliveCX -= fit.contrasts.row(i).transpose() * first->design.row(i);
          aliveX -= first->design.row(i).transpose();
        }
        if (fit.kind[i] == IpcwProcesses::Kind::competing) {
          const double g = fit.g_subject[i];
          if (g <= 0.0) {
            throw NumericalError(kModule, "IPCW weight undefined: G(T_i) = 0");
          }
          const double w = 1.0 / (g * g);
          comp0 += w;
          comp1 += w * fit.contrasts.row(i).transpose();
          comp2 += w * fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
          if (with_first) {
            const double lev = first->leverage(i);
            compL0 += w * lev;
            compL1 += w * lev * fit.contrasts.row(i).transpose();
            compL2 += w * lev * fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
            compCX += w * fit.contrasts.row(i).transpose() * first->design.row(i);
            compX += w * first->design.row(i).transpose();
          }
        }
      }
    }

    const double G = ipcw.censoring.at(t);
    const double G2 = G * G;
    fit.g_left[k] = G;

    const double d0 = alive0 + G2 * comp0;
    const Eigen::VectorXd d1 = alive1 + G2 * comp1;
    const Eigen::MatrixXd d2 = alive2 + G2 * comp2;
    fit.d0[k] = d0;
    if (d0 < kRiskFloor) {
      throw NumericalError(kModule, "risk set exhausted before tau");
    }
    fit.xbar.col(k) = d1 / d0;

    s2_raw += fit.gap[k] * (d2 - d1 * d1.transpose() / d0);

    if (with_first) {
      fit.d0_lev[k] = aliveL0 + G2 * compL0;
      fit.d1_lev.col(k) = aliveL1 + G2 * compL1;
      fit.d2_lev[k] = aliveL2 + G2 * compL2;
      const Eigen::MatrixXd dcx = aliveCX + G2 * compCX;
      const Eigen::VectorXd dx = aliveX + G2 * compX;
      fit.cross_b += fit.gap[k] * (dcx - fit.xbar.col(k) * dx.transpose());
    }
  }

  // Cause-event atoms: Yhat_i = 1 at the subject's own event.
  for (int i = 0; i < n; ++i) {
    if (data.subjects[i].status != data.cause_of_interest) continue;
    const int k = fit.grid_index[i];
    if (k < 0) continue;  // beyond tau
    fit.event_count[k] += 1;
    fit.event_csum.col(k) += fit.contrasts.row(i).transpose();
    fit.event_ccsum[k] += fit.contrasts.row(i).transpose() * fit.contrasts.row(i);
    s1_raw += fit.contrasts.row(i).transpose() - fit.xbar.col(k);
  }

  int total_events = std::accumulate(fit.event_count.begin(), fit.event_count.end(), 0);
  if (total_events == 0) {
    throw NumericalError(kModule, "no cause events before tau; empty grid");
  }

  fit.s2n = s2_raw / static_cast<double>(n);
  fit.s1n = s1_raw / static_cast<double>(n);
  if (with_first) fit.cross_b /= static_cast<double>(n);
  solve_beta(fit);

  // Baseline increment at each merged time: event atom plus dt drift.
  for (int k = 0; k < m; ++k) {
    const double bterm = fit.beta.dot(fit.xbar.col(k));
    fit.dh0[k] = fit.event_count[k] / fit.d0[k] - bterm * fit.gap[k];
  }
  fit.h0_star = estimate_baseline(fit);
  fit.h0_mod = monotone_baseline(fit.h0_star);
  fit.grid = fit.h0_star.times;
  return fit;
}

}  // namespace

double StepFunction::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

SubdistFit fit_iv(const Dataset& data, const FirstStageFit& first,
                  const IpcwProcesses& ipcw, const FitOptions& opts) {
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd contrasts(n, data.p + 1);
  for (int i = 0; i < n; ++i) {
    contrasts(i, 0) = first.fitted(i);
    for (int j = 0; j < data.p; ++j) contrasts(i, 1 + j) = data.subjects[i].covariates[j];
  }
  return fit_engine(data, ipcw, std::move(contrasts), &first, opts, FitMode::iv);
}

SubdistFit fit_naive(const Dataset& data, const IpcwProcesses& ipcw,
                     const FitOptions& opts) {
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd contrasts(n, data.p + 1);
  for (int i = 0; i < n; ++i) {
    contrasts(i, 0) = data.subjects[i].exposure;
    for (int j = 0; j < data.p; ++j) contrasts(i, 1 + j) = data.subjects[i].covariates[j];
  }
  return fit_engine(data, ipcw, std::move(contrasts), nullptr, opts, FitMode::naive);
}

StepFunction estimate_baseline(const SubdistFit& fit) {
  StepFunction h;
  double cum = 0.0;
  for (std::size_t k = 0; k < fit.merged_times.size(); ++k) {
    cum += fit.dh0[k];
    if (fit.event_count[k] > 0) {
      h.times.push_back(fit.merged_times[k]);
      h.values.push_back(cum);
    }
  }
  return h;
}

StepFunction monotone_baseline(const StepFunction& h0_star) {
  StepFunction h = h0_star;
  double running = 0.0;  // H0*(0) = 0 participates in the maximum
  for (double& v : h.values) {
    running = std::max(running, v);
    v = running;
  }
  return h;
}

}  // namespace ivcr
