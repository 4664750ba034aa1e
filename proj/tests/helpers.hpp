#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ivcr/data.hpp"

namespace testutil {

/// Small deterministic dataset generator for oracle comparisons.
inline ivcr::Dataset random_dataset(int n, int p, std::uint64_t seed,
                                    double censor_prob = 0.25,
                                    double competing_prob = 0.25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ivcr::Dataset d;
  d.p = p;
  for (int i = 0; i < n; ++i) {
    ivcr::Subject s;
    s.id = "s" + std::to_string(i);
    s.time = 0.1 + 2.0 * unif(rng);
    const double u = unif(rng);
    s.status = u < censor_prob ? 0 : (u < censor_prob + competing_prob ? 2 : 1);
    s.instrument = unif(rng) < 0.5 ? 0.0 : 1.0;
    s.exposure = 0.4 * s.instrument + 0.5 * normal(rng);
    for (int j = 0; j < p; ++j) s.covariates.push_back(normal(rng));
    d.subjects.push_back(std::move(s));
  }
  return d;
}

inline ivcr::Dataset dataset_from(const std::vector<double>& time,
                                  const std::vector<int>& status) {
  ivcr::Dataset d;
  d.p = 0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    ivcr::Subject s;
    s.id = "s" + std::to_string(i);
    s.time = time[i];
    s.status = status[i];
    s.exposure = static_cast<double>(i % 3) - 1.0;
    s.instrument = static_cast<double>(i % 2);
    d.subjects.push_back(std::move(s));
  }
  return d;
}

inline std::string to_csv(const ivcr::Dataset& d) {
  std::ostringstream out;
  ivcr::write_dataset(out, d);
  return out.str();
}

}  // namespace testutil
