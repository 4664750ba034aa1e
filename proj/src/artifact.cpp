#include "ivcr/artifact.hpp"

#include <fstream>

#include <json.hpp>

namespace ivcr {

namespace {

constexpr const char* kModule = "artifact";

using nlohmann::json;

std::uint64_t fnv1a(const void* bytes, std::size_t len,
                    std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::VectorXd vector_from(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from(const json& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r > 0 ? rows[0].size() : 0;
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw DataError(kModule, "ragged matrix in artifact");
    for (std::size_t j = 0; j < c; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

json to_json(const StepFunction& f) {
  return json{{"times", f.times}, {"values", f.values}};
}

StepFunction step_from(const json& j) {
  StepFunction f;
  f.times = j.at("times").get<std::vector<double>>();
  f.values = j.at("values").get<std::vector<double>>();
  if (f.times.size() != f.values.size())
    throw DataError(kModule, "step function length mismatch");
  return f;
}

}  // namespace

FitArtifact make_artifact(const FitResult& result, std::uint64_t input_digest) {
  FitArtifact art;
  art.input_digest = input_digest;

  const SubdistFit& full = result.fit;
  SubdistFit& slim = art.fit;
  slim.mode = full.mode;
  slim.n = full.n;
  slim.p = full.p;
  slim.tau = full.tau;
  slim.ci_level = full.ci_level;
  slim.beta = full.beta;
  slim.s1n = full.s1n;
  slim.s2n = full.s2n;
  slim.grid = full.grid;
  slim.h0_star = full.h0_star;
  slim.h0_mod = full.h0_mod;
  slim.offsets = full.offsets;

  art.variance = result.variance;
  art.pieces = cif_covariance_pieces(full);

  if (result.first) {
    art.has_first_stage = true;
    art.gamma = result.first->gamma;
    art.gamma_se = result.first->gamma_se;
    art.sigma2_hat = result.first->sigma2_hat;
    art.f_stat = result.first->f_stat;
  }
  return art;
}

void save_artifact(const std::string& path, const FitArtifact& art) {
  json fit{{"mode", art.fit.mode == FitMode::iv ? "iv" : "naive"},
           {"n", art.fit.n},
           {"p", art.fit.p},
           {"tau", art.fit.tau},
           {"ci_level", art.fit.ci_level},
           {"beta", to_json(art.fit.beta)},
           {"s1n", to_json(art.fit.s1n)},
           {"s2n", to_json(art.fit.s2n)},
           {"grid", art.fit.grid},
           {"h0_star", to_json(art.fit.h0_star)},
           {"h0_mod", to_json(art.fit.h0_mod)},
           {"offsets", art.fit.offsets}};
  json payload{{"tool_version", art.tool_version},
               {"format_version", art.format_version},
               {"input_digest", art.input_digest},
               {"fit", std::move(fit)},
               {"variance",
                json{{"omega", to_json(art.variance.omega)},
                     {"psi", to_json(art.variance.psi)},
                     {"sigma", to_json(art.variance.sigma)},
                     {"covariance", to_json(art.variance.covariance)}}},
               {"pieces",
                json{{"times", art.pieces.times},
                     {"g_hat", art.pieces.g_hat},
                     {"gamma_hat", to_json(art.pieces.gamma_hat)}}},
               {"has_first_stage", art.has_first_stage}};
  if (art.has_first_stage) {
    payload["first_stage"] = json{{"gamma", to_json(art.gamma)},
                                  {"gamma_se", to_json(art.gamma_se)},
                                  {"sigma2_hat", art.sigma2_hat},
                                  {"f_stat", art.f_stat}};
  }

  const std::string body = payload.dump();
  json wrapper{{"checksum", fnv1a(body.data(), body.size())},
               {"payload", std::move(payload)}};

  std::ofstream out(path);
  if (!out) throw DataError(kModule, "cannot write '" + path + "'");
  out << wrapper.dump(2) << "\n";
  if (!out) throw DataError(kModule, "write failed for '" + path + "'");
}

FitArtifact load_artifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(kModule, "cannot open '" + path + "'");
  json wrapper;
  try {
    in >> wrapper;
  } catch (const json::exception& e) {
    throw DataError(kModule, "malformed artifact: " + std::string(e.what()));
  }

  try {
    const json& payload = wrapper.at("payload");
    const std::string body = payload.dump();
    if (wrapper.at("checksum").get<std::uint64_t>() !=
        fnv1a(body.data(), body.size())) {
      throw DataError(kModule, "artifact checksum mismatch (file corrupt?)");
    }
    if (payload.at("format_version").get<int>() != kArtifactFormatVersion) {
      throw DataError(kModule, "unsupported artifact format version");
    }

    FitArtifact art;
    art.tool_version = payload.at("tool_version").get<std::string>();
    art.format_version = payload.at("format_version").get<int>();
    art.input_digest = payload.at("input_digest").get<std::uint64_t>();

    const json& fit = payload.at("fit");
    art.fit.mode = fit.at("mode").get<std::string>() == "iv" ? FitMode::iv
                                                             : FitMode::naive;
    art.fit.n = fit.at("n").get<int>();
    art.fit.p = fit.at("p").get<int>();
    art.fit.tau = fit.at("tau").get<double>();
    art.fit.ci_level = fit.at("ci_level").get<double>();
    art.fit.beta = vector_from(fit.at("beta"));
    art.fit.s1n = vector_from(fit.at("s1n"));
    art.fit.s2n = matrix_from(fit.at("s2n"));
    art.fit.grid = fit.at("grid").get<std::vector<double>>();
    art.fit.h0_star = step_from(fit.at("h0_star"));
    art.fit.h0_mod = step_from(fit.at("h0_mod"));
    art.fit.offsets = fit.at("offsets").get<std::vector<double>>();

    const json& var = payload.at("variance");
    art.variance.omega = matrix_from(var.at("omega"));
    art.variance.psi = matrix_from(var.at("psi"));
    art.variance.sigma = matrix_from(var.at("sigma"));
    art.variance.covariance = matrix_from(var.at("covariance"));

    const json& pieces = payload.at("pieces");
    art.pieces.times = pieces.at("times").get<std::vector<double>>();
    art.pieces.g_hat = pieces.at("g_hat").get<std::vector<double>>();
    art.pieces.gamma_hat = matrix_from(pieces.at("gamma_hat"));

    art.has_first_stage = payload.at("has_first_stage").get<bool>();
    if (art.has_first_stage) {
      const json& fs = payload.at("first_stage");
      art.gamma = vector_from(fs.at("gamma"));
      art.gamma_se = vector_from(fs.at("gamma_se"));
      art.sigma2_hat = fs.at("sigma2_hat").get<double>();
      art.f_stat = fs.at("f_stat").get<double>();
    }
    return art;
  } catch (const json::exception& e) {
    throw DataError(kModule, "malformed artifact: " + std::string(e.what()));
  }
}

std::uint64_t digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(kModule, "cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

}  // namespace ivcr
