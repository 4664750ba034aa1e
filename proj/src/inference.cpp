#include "ivcr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ivcr {

namespace {
constexpr const char* kModule = "inference";
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    if (prob == 0.0) return -std::numeric_limits<double>::infinity();
    if (prob == 1.0) return std::numeric_limits<double>::infinity();
    throw NumericalError(kModule, "quantile probability outside [0, 1]");
  }
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    double qv = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) /
        ((((dd[0] * qv + dd[1]) * qv + dd[2]) * qv + dd[3]) * qv + 1.0);
  } else if (prob > 1.0 - plow) {
    double qv = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * qv + c[1]) * qv + c[2]) * qv + c[3]) * qv + c[4]) * qv + c[5]) /
        ((((dd[0] * qv + dd[1]) * qv + dd[2]) * qv + dd[3]) * qv + 1.0);
  } else {
    double qv = prob - 0.5;
    double r = qv * qv;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * qv /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // One Halley refinement.
  double e = normal_cdf(x) - prob;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

InfluenceRecords influence_functions(const SubdistFit& fit,
                                     const FirstStageFit* first,
                                     const IpcwProcesses& ipcw) {
  const int n = fit.n;
  const int d = static_cast<int>(fit.beta.size());
  const int m = static_cast<int>(fit.merged_times.size());

  InfluenceRecords rec;
  rec.phi1 = Eigen::MatrixXd::Zero(n, d);
  rec.phi2 = Eigen::MatrixXd::Zero(n, d);
  rec.phi3 = Eigen::MatrixXd::Zero(n, d);

  // Cumulative grid sums for the martingale term, unit-weight head and
  // G^2-weighted competing tail.
  Eigen::VectorXd P1(m), P2(m);
  Eigen::MatrixXd P3(d, m), P4(d, m);
  Eigen::VectorXd Q1(m), Q2(m);
  Eigen::MatrixXd Q3(d, m), Q4(d, m);
  {
    double p1 = 0, p2 = 0, q1 = 0, q2 = 0;
    Eigen::VectorXd p3 = Eigen::VectorXd::Zero(d), p4 = p3, q3 = p3, q4 = p3;
    for (int k = 0; k < m; ++k) {
      const double g2 = fit.g_left[k] * fit.g_left[k];
      p1 += fit.gap[k];
      p2 += fit.dh0[k];
      p3 += fit.xbar.col(k) * fit.gap[k];
      p4 += fit.xbar.col(k) * fit.dh0[k];
      q1 += g2 * fit.gap[k];
      q2 += g2 * fit.dh0[k];
      q3 += fit.xbar.col(k) * (g2 * fit.gap[k]);
      q4 += fit.xbar.col(k) * (g2 * fit.dh0[k]);
      P1(k) = p1; P2(k) = p2; P3.col(k) = p3; P4.col(k) = p4;
      Q1(k) = q1; Q2(k) = q2; Q3.col(k) = q3; Q4.col(k) = q4;
    }
  }

  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd c = fit.contrasts.row(i).transpose();
    const double bc = fit.beta.dot(c);
    const int ki = fit.grid_index[i];
    const int ke = ki >= 0 ? ki : m - 1;

    Eigen::VectorXd phi =
        -(bc * (c * P1(ke) - P3.col(ke)) + (c * P2(ke) - P4.col(ke)));
    if (ki >= 0 && fit.kind[i] == IpcwProcesses::Kind::cause) {
      phi += c - fit.xbar.col(ki);
    }
    if (ki >= 0 && ki < m - 1 && fit.kind[i] == IpcwProcesses::Kind::competing) {
      const double g = fit.g_subject[i];
      const double invg2 = 1.0 / (g * g);
      const double t1 = Q1(m - 1) - Q1(ki);
      const double t2 = Q2(m - 1) - Q2(ki);
      const Eigen::VectorXd t3 = Q3.col(m - 1) - Q3.col(ki);
      const Eigen::VectorXd t4 = Q4.col(m - 1) - Q4.col(ki);
      phi -= invg2 * (bc * (c * t1 - t3) + (c * t2 - t4));
    }
    rec.phi1.row(i) = phi.transpose();
  }

  if (fit.mode == FitMode::iv) {
    if (first == nullptr) {
      throw NumericalError(kModule, "IV influence functions need the first stage");
    }
    // First-stage propagation: -beta_e * B (n^-1 X'X)^-1 x_i e_i, which sums
    // to zero by least-squares orthogonality.
    const double be = fit.beta(fit.exposure_index());
    const Eigen::MatrixXd coupling =
        -be * static_cast<double>(n) * fit.cross_b * first->xtx_inv;
    for (int i = 0; i < n; ++i) {
      rec.phi2.row(i) =
          (coupling * first->design.row(i).transpose() * first->residuals(i))
              .transpose();
    }
  }

  // Censoring-estimation term: per-subject a_i increments of the fitted
  // martingale, summed over the region {t >= u >= T_i} for each censoring
  // jump u, then integrated against dM^c_i.
  const auto& G = ipcw.censoring;
  const int L = static_cast<int>(G.jump_times.size());
  if (L > 0) {
    // Suffix sums of the G^2-weighted drift pieces.
    Eigen::VectorXd SQ1(m + 1), SQ2(m + 1);
    Eigen::MatrixXd SQ3 = Eigen::MatrixXd::Zero(d, m + 1);
    Eigen::MatrixXd SQ4 = Eigen::MatrixXd::Zero(d, m + 1);
    SQ1(m) = SQ2(m) = 0.0;
    for (int k = m - 1; k >= 0; --k) {
      const double g2 = fit.g_left[k] * fit.g_left[k];
      SQ1(k) = SQ1(k + 1) + g2 * fit.gap[k];
      SQ2(k) = SQ2(k + 1) + g2 * fit.dh0[k];
      SQ3.col(k) = SQ3.col(k + 1) + fit.xbar.col(k) * (g2 * fit.gap[k]);
      SQ4.col(k) = SQ4.col(k + 1) + fit.xbar.col(k) * (g2 * fit.dh0[k]);
    }

    // Subjects grouped by grid point, and subject order by follow-up time.
    std::vector<std::vector<int>> at_grid(m);
    for (int i = 0; i < n; ++i)
      if (fit.grid_index[i] >= 0) at_grid[fit.grid_index[i]].push_back(i);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return fit.subject_time[a] < fit.subject_time[b];
    });

    std::vector<double> dlam(L, 0.0);
    Eigen::MatrixXd vfull = Eigen::MatrixXd::Zero(d, L);
    double s0 = 0.0, sb = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sbc = Eigen::VectorXd::Zero(d);
    std::size_t next = 0;

    for (int l = 0; l < L; ++l) {
      const double u = G.jump_times[l];
      dlam[l] = static_cast<double>(G.censor_counts[l]) / G.risk_counts[l];
      if (u > fit.tau) continue;
      const double pi = static_cast<double>(G.risk_counts[l]) / n;

      while (next < order.size() && fit.subject_time[order[next]] < u) {
        const int i = order[next++];
        if (fit.kind[i] == IpcwProcesses::Kind::competing && fit.grid_index[i] >= 0) {
          const double g = fit.g_subject[i];
          const double invg2 = 1.0 / (g * g);
          const Eigen::VectorXd c = fit.contrasts.row(i).transpose();
          const double bc = fit.beta.dot(c);
          s0 += invg2;
          sb += invg2 * bc;
          s1 += invg2 * c;
          sbc += (invg2 * bc) * c;
        }
      }

      const int k = static_cast<int>(
          std::lower_bound(fit.merged_times.begin(), fit.merged_times.end(), u) -
          fit.merged_times.begin());
      // u is an observed censoring time <= tau, hence a grid point.
      Eigen::VectorXd total =
          -(sbc * SQ1(k) - sb * SQ3.col(k) + SQ2(k) * s1 - s0 * SQ4.col(k));

      for (int i : at_grid[k]) {
        if (fit.subject_time[i] != u) continue;
        const Eigen::VectorXd c = fit.contrasts.row(i).transpose();
        const double bc = fit.beta.dot(c);
        const double atom = fit.kind[i] == IpcwProcesses::Kind::cause ? 1.0 : 0.0;
        total += (c - fit.xbar.col(k)) *
                 (atom - (bc * fit.gap[k] + fit.dh0[k]));
        if (fit.kind[i] == IpcwProcesses::Kind::competing) {
          const double g = fit.g_subject[i];
          const double invg2 = 1.0 / (g * g);
          total -= invg2 * (bc * (c * SQ1(k + 1) - SQ3.col(k + 1)) +
                            (c * SQ2(k + 1) - SQ4.col(k + 1)));
        }
      }

      vfull.col(l) = -total / (static_cast<double>(n) * pi);
    }

    // Prefix sums of (q/pi) dLambda over censoring jumps.
    Eigen::MatrixXd vdl = Eigen::MatrixXd::Zero(d, L + 1);
    for (int l = 0; l < L; ++l) {
      vdl.col(l + 1) = vdl.col(l) + vfull.col(l) * dlam[l];
    }

    for (int i = 0; i < n; ++i) {
      const double ti = fit.subject_time[i];
      // number of jumps with u <= min(ti, tau-ish); drift only runs to tau
      const double cap = std::min(ti, fit.tau);
      const int nl = static_cast<int>(
          std::upper_bound(G.jump_times.begin(), G.jump_times.end(), cap) -
          G.jump_times.begin());
      Eigen::VectorXd phi = -vdl.col(nl);
      if (fit.kind[i] == IpcwProcesses::Kind::censored && ti <= fit.tau) {
        const int l = static_cast<int>(
            std::lower_bound(G.jump_times.begin(), G.jump_times.end(), ti) -
            G.jump_times.begin());
        phi += vfull.col(l);
      }
      rec.phi3.row(i) = phi.transpose();
    }
  }

  rec.phi = rec.phi1 + rec.phi2 + rec.phi3;
  return rec;
}

VarianceComponents sandwich_variance(const InfluenceRecords& records,
                                     const SubdistFit& fit) {
  const int n = fit.n;
  const int d = static_cast<int>(fit.beta.size());
  const int m = static_cast<int>(fit.merged_times.size());

  VarianceComponents out;
  out.omega = fit.s2n;

  out.psi = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < m; ++k) {
    if (fit.event_count[k] == 0) continue;
    const Eigen::VectorXd xb = fit.xbar.col(k);
    out.psi += fit.event_ccsum[k] - fit.event_csum.col(k) * xb.transpose() -
               xb * fit.event_csum.col(k).transpose() +
               fit.event_count[k] * xb * xb.transpose();
  }
  out.psi /= static_cast<double>(n);

  out.sigma = Eigen::MatrixXd::Zero(d, d);
  if (fit.mode == FitMode::iv) {
    for (int k = 0; k < m; ++k) {
      const Eigen::VectorXd xb = fit.xbar.col(k);
      out.sigma += fit.gap[k] *
                   (fit.d2_lev[k] - fit.d1_lev.col(k) * xb.transpose() -
                    xb * fit.d1_lev.col(k).transpose() +
                    fit.d0_lev[k] * xb * xb.transpose());
    }
    const double be = fit.beta(fit.exposure_index());
    out.sigma *= fit.sigma2_first * be * be / static_cast<double>(n);
  }

  const Eigen::MatrixXd meat =
      records.phi.transpose() * records.phi / static_cast<double>(n);
  const Eigen::MatrixXd s2inv =
      fit.s2n.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd cov = s2inv * meat * s2inv / static_cast<double>(n);
  out.covariance = (cov + cov.transpose()) / 2.0;
  return out;
}

std::vector<CoefSummary> wald_summary(const SubdistFit& fit,
                                      const VarianceComponents& variance,
                                      double level,
                                      const std::vector<std::string>& names) {
  if (!(level > 0.0 && level < 1.0)) {
    throw UsageError(kModule, "confidence level must lie in (0, 1)");
  }
  const double zq = normal_quantile(0.5 + level / 2.0);
  std::vector<CoefSummary> rows;
  for (int j = 0; j < fit.beta.size(); ++j) {
    CoefSummary row;
    row.name = j < static_cast<int>(names.size())
                   ? names[j]
                   : (j == 0 ? "exposure" : "x" + std::to_string(j));
    row.estimate = fit.beta(j);
    row.se = std::sqrt(std::max(0.0, variance.covariance(j, j)));
    if (row.se > 0.0) {
      row.z = row.estimate / row.se;
      row.p_value = 2.0 * (1.0 - normal_cdf(std::abs(row.z)));
    } else {
      row.degenerate = true;
      row.z = row.estimate == 0.0 ? 0.0
                                  : std::copysign(
                                        std::numeric_limits<double>::infinity(),
                                        row.estimate);
      row.p_value = row.estimate == 0.0 ? 1.0 : 0.0;
    }
    row.ci_lower = row.estimate - zq * row.se;
    row.ci_upper = row.estimate + zq * row.se;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ivcr
