#pragma once

#include <optional>

#include "ivcr/additive_fit.hpp"
#include "ivcr/inference.hpp"

namespace ivcr {

/// End-to-end result of one model fit on a dataset: centering, censoring
/// estimation, (optional) first stage, second stage and variance.
struct FitResult {
  Dataset data;  // centered copy used for fitting
  CensoringSurvival censoring;
  std::optional<FirstStageFit> first;  // present for IV fits
  WeakIvReport weak;
  SubdistFit fit;
  InfluenceRecords influence;
  VarianceComponents variance;
};

/// Runs the whole pipeline on raw (uncentered) data.
FitResult run_fit(const Dataset& raw, FitMode mode, const FitOptions& opts = {});

}  // namespace ivcr
