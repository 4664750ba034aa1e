#include "ivcr/pipeline.hpp"

namespace ivcr {

FitResult run_fit(const Dataset& raw, FitMode mode, const FitOptions& opts) {
  validate(raw);

  FitResult out;
  out.data = center(raw);
  out.censoring = fit_km_censoring(out.data);
  const IpcwProcesses ipcw = build_ipcw(out.data, out.censoring);

  if (mode == FitMode::iv) {
    out.first = fit_first_stage(out.data);
    out.weak = weak_iv_diagnostic(*out.first);
    out.fit = fit_iv(out.data, *out.first, ipcw, opts);
  } else {
    out.fit = fit_naive(out.data, ipcw, opts);
  }

  out.influence = influence_functions(
      out.fit, out.first ? &*out.first : nullptr, ipcw);
  out.variance = sandwich_variance(out.influence, out.fit);
  return out;
}

}  // namespace ivcr
