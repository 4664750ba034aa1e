#pragma once

#include <cstdint>
#include <string>

#include "ivcr/pipeline.hpp"
#include "ivcr/prediction.hpp"

namespace ivcr {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kArtifactFormatVersion = 1;

/// Everything needed to reload a fit and issue predictions: coefficients,
/// baseline step functions, variance, covariance pieces, centering offsets,
/// first-stage summary, plus a digest of the input file. Numeric fields
/// round-trip bit-for-bit; the payload is checksummed against truncation.
struct FitArtifact {
  std::string tool_version = kToolVersion;
  int format_version = kArtifactFormatVersion;
  std::uint64_t input_digest = 0;

  SubdistFit fit;  // prediction-sufficient subset of the fit state
  VarianceComponents variance;
  CifCovariancePieces pieces;

  bool has_first_stage = false;
  Eigen::VectorXd gamma;
  Eigen::VectorXd gamma_se;
  double sigma2_hat = 0.0;
  double f_stat = 0.0;
};

FitArtifact make_artifact(const FitResult& result, std::uint64_t input_digest);

void save_artifact(const std::string& path, const FitArtifact& artifact);
/// Throws DataError on corrupt (checksum) or incompatible (version) files.
FitArtifact load_artifact(const std::string& path);

/// FNV-1a digest of a file's bytes, used to detect dataset drift between
/// fit and predict.
std::uint64_t digest_file(const std::string& path);

}  // namespace ivcr
