#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ivcr/errors.hpp"

namespace ivcr {

/// One subject-level competing-risks record.
///
/// `status` codes: 0 = censored, 1..K = failure causes. The follow-up time
/// is the composite outcome min(event time, censoring time).
struct Subject {
  std::string id;
  double time = 0.0;
  int status = 0;
  double exposure = 0.0;
  double instrument = 0.0;
  std::vector<double> covariates;
};

/// A validated collection of subjects with shared covariate dimension.
///
/// `centering_offsets` holds the column means removed from (instrument,
/// exposure, covariates...) in that order; empty until center() is applied.
struct Dataset {
  std::vector<Subject> subjects;
  int p = 0;
  int cause_of_interest = 1;
  std::vector<double> centering_offsets;

  std::size_t size() const noexcept { return subjects.size(); }
  bool centered() const noexcept { return !centering_offsets.empty(); }
  double max_time() const;
  /// Number of subjects failing from the cause of interest.
  int n_cause_events() const;
  /// Treats every status not equal to cause_of_interest (and nonzero) as
  /// the pooled competing event.
  bool is_competing(const Subject& s) const {
    return s.status != 0 && s.status != cause_of_interest;
  }
};

/// Maps CSV column names onto record roles. When `covariates` is empty,
/// every column not claimed by another role is taken as a covariate, in
/// file order.
struct ColumnSchema {
  std::string id = "id";
  std::string time = "time";
  std::string status = "status";
  std::string exposure = "exposure";
  std::string instrument = "instrument";
  std::vector<std::string> covariates;
};

/// Fitting options shared by the IV and naive paths. `tau` is the upper
/// integration limit; when unset it defaults to the largest event time of
/// the cause of interest. Unit weights w_i(t) = 1 are the only scheme.
struct FitOptions {
  std::optional<double> tau;
  double ci_level = 0.95;
};

/// Parses comma-separated subject records. Header row required. Missing
/// values abort with a row-indexed DataError.
Dataset load_dataset(std::istream& in, const ColumnSchema& schema = {});
Dataset load_dataset_file(const std::string& path, const ColumnSchema& schema = {});

/// Writes a dataset back out in the same CSV layout load_dataset accepts.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset_file(const std::string& path, const Dataset& data);

/// Removes sample means from instrument, exposure and covariate columns,
/// accumulating the removed offsets so predictions can be issued on the
/// original scale.
Dataset center(const Dataset& data);

/// Checks the Subject/Dataset invariants, throwing DataError on violation.
void validate(const Dataset& data);

double resolve_tau(const Dataset& data, const FitOptions& opts);

}  // namespace ivcr
