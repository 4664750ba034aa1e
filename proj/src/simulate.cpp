#include "ivcr/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "ivcr/pipeline.hpp"

namespace ivcr {

namespace {

constexpr const char* kModule = "simulation";

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream per (seed, stream) pair.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xd6e8feb86659fd93ULL;
  std::uint64_t b = splitmix64(s);
  return std::mt19937_64(a ^ (b << 1) ^ stream);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Solves cdf(t) = u on (0, inf) by bracket doubling plus bisection.
template <typename Cdf>
double invert_cdf(Cdf cdf, double u) {
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (cdf(hi) < u && guard++ < 128) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = (lo + hi) / 2.0;
    if (cdf(mid) < u) lo = mid; else hi = mid;
  }
  return (lo + hi) / 2.0;
}

struct Draw {
  double time = 0.0;
  int cause = 1;
  double x_e = 0.0;
  double x_i = 0.0;
  double x_o = 0.0;
};

/// Covariates, cause and latent event time for one subject; redraws the
/// covariates while the implied cause-1 probability is invalid.
Draw draw_subject(const SimScenario& s, std::mt19937_64& rng,
                  long* resample_counter) {
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Draw d;
  double linpred = 0.0;
  for (;;) {
    d.x_i = coin(rng) ? 1.0 : 0.0;
    d.x_o = normal(rng);
    double x_u;
    if (s.link == ExposureLink::linear) {
      x_u = unif(rng) - 0.5;
      d.x_e = s.gamma2 * d.x_i + 0.5 * d.x_o - x_u;
    } else {
      x_u = unif(rng) - 0.5;
      const double pr = logistic(s.logistic.intercept +
                                 s.logistic.instrument * d.x_i +
                                 s.logistic.covariate * d.x_o +
                                 s.logistic.confounder * x_u);
      d.x_e = unif(rng) < pr ? 1.0 : 0.0;
    }
    linpred = s.beta_e * d.x_e + s.beta_o * d.x_o + s.beta_u * x_u;
    const double p1 = cause1_probability(s, linpred);
    // Besides a valid cause probability, both subdistributions must be
    // nondecreasing; their densities are minimized at t0, giving the two
    // linear-predictor bounds below.
    const double et0 = std::exp(-s.t0);
    const double h0_min = s.p_mix * et0 / (1.0 - s.p_mix * (1.0 - et0));
    const double f2_cap = et0 / (1.0 - et0);
    if (p1 > 0.0 && p1 < 1.0 && linpred >= -h0_min && linpred <= f2_cap) {
      d.cause = unif(rng) < p1 ? 1 : 2;
      break;
    }
    if (resample_counter) ++*resample_counter;
  }

  const double u = unif(rng);
  if (d.cause == 1) {
    d.time = invert_cdf([&](double t) { return cause1_cdf(s, linpred, t); }, u);
  } else {
    d.time = invert_cdf([&](double t) { return cause2_cdf(s, linpred, t); }, u);
  }
  return d;
}

}  // namespace

double cause1_probability(const SimScenario& s, double linpred) {
  return 1.0 - (1.0 - s.p_mix) * std::exp(-linpred * s.t0);
}

double cause1_cdf(const SimScenario& s, double linpred, double t) {
  if (t <= 0.0) return 0.0;
  const double ts = std::min(t, s.t0);
  const double num =
      1.0 - (1.0 - s.p_mix * (1.0 - std::exp(-t))) * std::exp(-linpred * ts);
  return num / cause1_probability(s, linpred);
}

double cause2_cdf(const SimScenario& s, double linpred, double t) {
  if (t <= 0.0) return 0.0;
  const double ts = std::min(t, s.t0);
  return (1.0 - std::exp(-t)) * std::exp(linpred * (s.t0 - ts));
}

Dataset generate_replicate(const SimScenario& scenario, std::uint64_t rep_index,
                           double censoring_rate, long* resample_counter) {
  std::mt19937_64 rng = make_rng(scenario.seed, rep_index);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Dataset data;
  data.p = 1;
  data.subjects.reserve(scenario.n);
  for (int i = 0; i < scenario.n; ++i) {
    Draw d = draw_subject(scenario, rng, resample_counter);
    double c = std::numeric_limits<double>::infinity();
    if (censoring_rate > 0.0) {
      c = -std::log(1.0 - unif(rng)) / censoring_rate;
    }
    Subject subj;
    subj.id = std::to_string(i + 1);
    subj.exposure = d.x_e;
    subj.instrument = d.x_i;
    subj.covariates = {d.x_o};
    if (c < d.time) {
      subj.time = c;
      subj.status = 0;
    } else {
      subj.time = d.time;
      subj.status = d.cause;
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

double calibrate_censoring(const SimScenario& scenario) {
  if (scenario.target_censoring <= 0.0) return 0.0;
  if (scenario.target_censoring >= 1.0) {
    throw UsageError(kModule, "target censoring fraction must be below 1");
  }

  // Pilot event times and one uniform per subject; with common draws the
  // censored fraction is monotone in the rate, so bisection is safe.
  const int pilot = 100000;
  std::mt19937_64 rng = make_rng(scenario.seed, 0x63616c6962ULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> event(pilot), expo(pilot);
  for (int i = 0; i < pilot; ++i) {
    event[i] = draw_subject(scenario, rng, nullptr).time;
    expo[i] = -std::log(1.0 - unif(rng));
  }
  auto frac = [&](double rate) {
    int c = 0;
    for (int i = 0; i < pilot; ++i)
      if (expo[i] / rate < event[i]) ++c;
    return static_cast<double>(c) / pilot;
  };

  double lo = 1e-8, hi = 1.0;
  int guard = 0;
  while (frac(hi) < scenario.target_censoring && guard++ < 64) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double f = frac(mid);
    if (std::abs(f - scenario.target_censoring) <= 0.005) return mid;
    if (f < scenario.target_censoring) lo = mid; else hi = mid;
  }
  throw NumericalError(kModule, "censoring calibration did not converge");
}

SimResult run_monte_carlo(const SimScenario& scenario) {
  if (scenario.reps <= 0) throw UsageError(kModule, "reps must be positive");

  SimResult result;
  result.reps = scenario.reps;
  result.censoring_rate = calibrate_censoring(scenario);

  struct RepOut {
    bool iv_ok = false, naive_ok = false;
    double iv_est = 0, iv_se = 0, naive_est = 0, naive_se = 0;
    bool weak = false;
    double censored_frac = 0.0;
    long resamples = 0;
  };
  std::vector<RepOut> slots(scenario.reps);

  const double zq = normal_quantile(0.5 + scenario.ci_level / 2.0);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= scenario.reps) return;
      RepOut& out = slots[rep];
      Dataset data = generate_replicate(scenario, rep, result.censoring_rate,
                                        &out.resamples);
      int censored = 0;
      for (const auto& s : data.subjects) censored += s.status == 0;
      out.censored_frac = static_cast<double>(censored) / data.size();
      // The generated effect is constant on [0, t0] only, so the constant-
      // coefficient fit is evaluated on that window.
      FitOptions opts;
      double last_event = 0.0;
      for (const auto& s : data.subjects)
        if (s.status == 1) last_event = std::max(last_event, s.time);
      opts.tau = std::min(scenario.t0, last_event);
      opts.ci_level = scenario.ci_level;
      try {
        FitResult iv = run_fit(data, FitMode::iv, opts);
        out.iv_est = iv.fit.beta(0);
        out.iv_se = std::sqrt(std::max(0.0, iv.variance.covariance(0, 0)));
        out.weak = iv.weak.weak;
        out.iv_ok = true;
      } catch (const Error&) {
        out.weak = true;
      }
      try {
        FitResult nv = run_fit(data, FitMode::naive, opts);
        out.naive_est = nv.fit.beta(0);
        out.naive_se = std::sqrt(std::max(0.0, nv.variance.covariance(0, 0)));
        out.naive_ok = true;
      } catch (const Error&) {
      }
    }
  };

  int workers = scenario.workers > 0
                    ? scenario.workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, scenario.reps);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  auto summarize = [&](bool iv) {
    MethodSummary s;
    int covered = 0;
    for (const auto& out : slots) {
      const bool ok = iv ? out.iv_ok : out.naive_ok;
      if (!ok) {
        ++s.failures;
        continue;
      }
      const double est = iv ? out.iv_est : out.naive_est;
      const double se = iv ? out.iv_se : out.naive_se;
      s.estimates.push_back(est);
      s.ses.push_back(se);
      if (std::abs(est - scenario.beta_e) <= zq * se) ++covered;
    }
    const std::size_t k = s.estimates.size();
    if (k > 0) {
      double mean = 0, mse = 0;
      for (double e : s.estimates) mean += e;
      mean /= k;
      for (double e : s.estimates) mse += (e - mean) * (e - mean);
      s.bias = mean - scenario.beta_e;
      s.empirical_se = k > 1 ? std::sqrt(mse / (k - 1)) : 0.0;
      double mse_hat = 0;
      for (double v : s.ses) mse_hat += v;
      s.mean_sandwich_se = mse_hat / k;
      s.coverage = static_cast<double>(covered) / k;
    }
    return s;
  };
  result.iv = summarize(true);
  result.naive = summarize(false);

  double cens = 0, weakf = 0;
  for (const auto& out : slots) {
    cens += out.censored_frac;
    weakf += out.weak ? 1.0 : 0.0;
    result.resample_count += out.resamples;
  }
  result.realized_censoring = cens / scenario.reps;
  result.weak_flag_rate = weakf / scenario.reps;
  return result;
}

Dataset synthetic_registry_like(int n, int p, std::uint64_t seed) {
  if (n <= 0 || p <= 0) throw UsageError(kModule, "need n > 0 and p > 0");
  std::mt19937_64 rng = make_rng(seed, 0x7265676973ULL);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimScenario shape;
  shape.p_mix = 0.75;
  shape.t0 = 0.6;

  Dataset data;
  data.p = p;
  data.subjects.reserve(n);
  for (int i = 0; i < n; ++i) {
    Subject s;
    s.id = "R" + std::to_string(100000 + i);
    s.instrument = coin(rng) ? 1.0 : 0.0;
    s.covariates.resize(p);
    for (int j = 0; j < p; ++j) s.covariates[j] = normal(rng);
    const double x_u = normal(rng);
    const double pr = logistic(-1.5 + 1.2 * s.instrument +
                               0.2 * s.covariates[0] + 0.2 * x_u);
    s.exposure = unif(rng) < pr ? 1.0 : 0.0;

    double linpred = 0.4 * s.exposure + 0.3 * x_u;
    for (int j = 0; j < p; ++j) linpred += 0.15 * s.covariates[j];
    double p1 = cause1_probability(shape, linpred);
    p1 = std::clamp(p1, 0.02, 0.98);
    const int cause = unif(rng) < p1 ? 1 : 2;
    const double u = unif(rng);
    const double t =
        cause == 1
            ? invert_cdf([&](double v) { return cause1_cdf(shape, linpred, v); }, u)
            : invert_cdf([&](double v) { return cause2_cdf(shape, linpred, v); }, u);
    const double c = -std::log(1.0 - unif(rng)) / 0.25;
    if (c < t) {
      s.time = c;
      s.status = 0;
    } else {
      s.time = t;
      s.status = cause;
    }
    data.subjects.push_back(std::move(s));
  }
  return data;
}

}  // namespace ivcr
