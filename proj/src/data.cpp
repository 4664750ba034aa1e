#include "ivcr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace ivcr {

namespace {

constexpr const char* kModule = "data_model";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{}
                                         : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t row, const std::string& col) {
  if (s.empty()) {
    throw DataError(kModule, "row " + std::to_string(row) + ": missing value in column '" + col + "'");
  }
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(kModule, "row " + std::to_string(row) + ": cannot parse '" + s + "' in column '" + col + "'");
  }
}

}  // namespace

double Dataset::max_time() const {
  double m = 0.0;
  for (const auto& s : subjects) m = std::max(m, s.time);
  return m;
}

int Dataset::n_cause_events() const {
  int k = 0;
  for (const auto& s : subjects)
    if (s.status == cause_of_interest) ++k;
  return k;
}

Dataset load_dataset(std::istream& in, const ColumnSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(kModule, "empty input");
  auto header = split_csv_line(line);

  std::unordered_map<std::string, int> col;
  for (int i = 0; i < static_cast<int>(header.size()); ++i) col[header[i]] = i;

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError(kModule, "missing required column '" + name + "'");
    return it->second;
  };
  const int ci = require(schema.id);
  const int ct = require(schema.time);
  const int cs = require(schema.status);
  const int ce = require(schema.exposure);
  const int cI = require(schema.instrument);

  std::vector<int> ccov;
  if (schema.covariates.empty()) {
    std::vector<bool> claimed(header.size(), false);
    for (int c : {ci, ct, cs, ce, cI}) claimed[c] = true;
    for (int i = 0; i < static_cast<int>(header.size()); ++i)
      if (!claimed[i]) ccov.push_back(i);
  } else {
    for (const auto& name : schema.covariates) ccov.push_back(require(name));
  }

  Dataset data;
  data.p = static_cast<int>(ccov.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(kModule, "row " + std::to_string(row) + ": expected " +
                                   std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    Subject s;
    s.id = fields[ci];
    s.time = parse_number(fields[ct], row, schema.time);
    double status = parse_number(fields[cs], row, schema.status);
    if (status != std::floor(status) || status < 0) {
      throw DataError(kModule, "row " + std::to_string(row) + ": unknown status code '" + fields[cs] + "'");
    }
    s.status = static_cast<int>(status);
    s.exposure = parse_number(fields[ce], row, schema.exposure);
    s.instrument = parse_number(fields[cI], row, schema.instrument);
    for (int c : ccov) s.covariates.push_back(parse_number(fields[c], row, header[c]));
    if (!(s.time >= 0.0) || !std::isfinite(s.time)) {
      throw DataError(kModule, "row " + std::to_string(row) + ": time must be finite and nonnegative");
    }
    data.subjects.push_back(std::move(s));
  }
  if (data.subjects.empty()) throw DataError(kModule, "no data rows");
  validate(data);
  return data;
}

Dataset load_dataset_file(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open '" + path + "'");
  return load_dataset(in, schema);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "id,time,status,exposure,instrument";
  for (int j = 0; j < data.p; ++j) out << ",x" << (j + 1);
  out << "\n";
  out.precision(17);
  for (const auto& s : data.subjects) {
    out << s.id << ',' << s.time << ',' << s.status << ',' << s.exposure << ','
        << s.instrument;
    for (double v : s.covariates) out << ',' << v;
    out << "\n";
  }
}

void write_dataset_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write '" + path + "'");
  write_dataset(out, data);
}

void validate(const Dataset& data) {
  if (data.subjects.empty()) throw DataError(kModule, "empty dataset");
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& s = data.subjects[i];
    if (!(s.time >= 0.0) || !std::isfinite(s.time)) {
      throw DataError(kModule, "subject " + std::to_string(i) + ": invalid time");
    }
    if (s.status < 0) throw DataError(kModule, "subject " + std::to_string(i) + ": negative status");
    if (static_cast<int>(s.covariates.size()) != data.p) {
      throw DataError(kModule, "subject " + std::to_string(i) + ": covariate length " +
                                   std::to_string(s.covariates.size()) + " != p=" +
                                   std::to_string(data.p));
    }
  }
  if (data.n_cause_events() == 0) {
    throw DataError(kModule, "no subject failed from cause " +
                                 std::to_string(data.cause_of_interest) +
                                 "; fit is undefined");
  }
}

Dataset center(const Dataset& data) {
  if (data.subjects.empty()) throw DataError(kModule, "empty dataset");
  const double n = static_cast<double>(data.subjects.size());

  std::vector<double> means(data.p + 2, 0.0);
  for (const auto& s : data.subjects) {
    means[0] += s.instrument;
    means[1] += s.exposure;
    for (int j = 0; j < data.p; ++j) means[2 + j] += s.covariates[j];
  }
  for (double& m : means) m /= n;

  Dataset out = data;
  for (auto& s : out.subjects) {
    s.instrument -= means[0];
    s.exposure -= means[1];
    for (int j = 0; j < data.p; ++j) s.covariates[j] -= means[2 + j];
  }
  if (out.centering_offsets.empty()) {
    out.centering_offsets = means;
  } else {
    for (std::size_t j = 0; j < means.size(); ++j) out.centering_offsets[j] += means[j];
  }
  return out;
}

double resolve_tau(const Dataset& data, const FitOptions& opts) {
  if (opts.tau) {
    double tau = *opts.tau;
    if (!(tau > 0.0) || tau > data.max_time()) {
      throw DataError(kModule, "tau must satisfy 0 < tau <= max observed time");
    }
    return tau;
  }
  double tau = 0.0;
  for (const auto& s : data.subjects)
    if (s.status == data.cause_of_interest) tau = std::max(tau, s.time);
  if (tau <= 0.0) throw DataError(kModule, "no cause events to set tau from");
  return tau;
}

}  // namespace ivcr
