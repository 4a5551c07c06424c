#include "gmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmc/errors.hpp"
#include "gmc/normal.hpp"

namespace gmc {

namespace {

constexpr double kQuantileTol = 1e-10;
constexpr int kQuantileMaxIter = 200;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  // Row-major nested arrays.
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw FormatError("ragged matrix in state record");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void Hyperparams::validate(std::size_t p_star) const {
  auto fail = [](const std::string& msg) { throw ConfigError("hyperparameters: " + msg); };
  if (H < 1) fail("H must be >= 1");
  if (k < 1 || static_cast<std::size_t>(k) > p_star)
    fail("k must satisfy 1 <= k <= p* (" + std::to_string(p_star) + ")");
  if (!(nu0 >= k + 2)) fail("nu0 must be >= k + 2");
  if (mu0.size() != k) fail("mu0 must have length k");
  for (double v : {delta, kappa0, a_alpha, b_alpha, a_sigma, b_sigma, a1, a2, nu_phi})
    if (!(v > 0) || !std::isfinite(v)) fail("scale and Gamma parameters must be > 0");
  if (resample_threshold < 0) fail("resample_threshold must be >= 0");
}

Hyperparams default_hyperparams(std::size_t p_star) {
  if (p_star < 1) throw ConfigError("p* must be >= 1");
  Hyperparams h;
  h.k = static_cast<int>(std::ceil(0.7 * static_cast<double>(p_star) - 1e-12));
  h.k = std::clamp(h.k, 1, static_cast<int>(p_star));
  h.nu0 = h.k + 2;
  h.mu0 = Eigen::VectorXd::Zero(h.k);
  return h;
}

nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  return {{"H", h.H},
          {"k", h.k},
          {"delta", h.delta},
          {"kappa0", h.kappa0},
          {"nu0", h.nu0},
          {"mu0", vector_to_json(h.mu0)},
          {"a_alpha", h.a_alpha},
          {"b_alpha", h.b_alpha},
          {"a_sigma", h.a_sigma},
          {"b_sigma", h.b_sigma},
          {"a1", h.a1},
          {"a2", h.a2},
          {"nu_phi", h.nu_phi},
          {"resample_threshold", h.resample_threshold},
          {"blocked_rows", h.blocked_rows}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams h) {
  try {
    bool k_changed = false;
    if (j.contains("H")) h.H = j["H"].get<int>();
    if (j.contains("k")) {
      h.k = j["k"].get<int>();
      k_changed = true;
    }
    if (j.contains("delta")) h.delta = j["delta"].get<double>();
    if (j.contains("kappa0")) h.kappa0 = j["kappa0"].get<double>();
    if (j.contains("nu0")) h.nu0 = j["nu0"].get<double>();
    else if (k_changed) h.nu0 = h.k + 2;
    if (j.contains("mu0")) h.mu0 = vector_from_json(j["mu0"]);
    else if (k_changed) h.mu0 = Eigen::VectorXd::Zero(h.k);
    if (j.contains("a_alpha")) h.a_alpha = j["a_alpha"].get<double>();
    if (j.contains("b_alpha")) h.b_alpha = j["b_alpha"].get<double>();
    if (j.contains("a_sigma")) h.a_sigma = j["a_sigma"].get<double>();
    if (j.contains("b_sigma")) h.b_sigma = j["b_sigma"].get<double>();
    if (j.contains("a1")) h.a1 = j["a1"].get<double>();
    if (j.contains("a2")) h.a2 = j["a2"].get<double>();
    if (j.contains("nu_phi")) h.nu_phi = j["nu_phi"].get<double>();
    if (j.contains("resample_threshold")) h.resample_threshold = j["resample_threshold"].get<int>();
    if (j.contains("blocked_rows")) h.blocked_rows = j["blocked_rows"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed hyperparameters: ") + e.what());
  }
  return h;
}

std::size_t GmcState::occupied_clusters() const {
  std::vector<bool> seen(H(), false);
  for (int c : labels) seen[static_cast<std::size_t>(c)] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

void GmcState::check_invariants() const {
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw NumericError("weights do not sum to 1");
  if ((sigma2.array() <= 0).any()) throw NumericError("non-positive idiosyncratic variance");
  for (std::size_t h = 0; h < covs.size(); ++h) {
    const auto& D = covs[h];
    if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + D.cwiseAbs().maxCoeff()))
      throw NumericError("component covariance " + std::to_string(h) + " is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(D);
    if (llt.info() != Eigen::Success)
      throw NumericError("component covariance " + std::to_string(h) + " is not SPD");
  }
  double prod = 1.0;
  for (Eigen::Index t = 0; t < global_increments.size(); ++t) {
    prod *= global_increments[t];
    if (std::abs(global_scales[t] - prod) > 1e-10 * std::abs(prod))
      throw NumericError("global scales are not cumulative products");
  }
}

Eigen::VectorXd stick_break(const Eigen::VectorXd& fractions) {
  const Eigen::Index H = fractions.size();
  if (H < 1) throw DomainError("stick_break needs at least one fraction");
  for (Eigen::Index h = 0; h < H; ++h)
    if (!(fractions[h] >= 0.0 && fractions[h] <= 1.0))
      throw DomainError("stick fraction outside [0, 1]");
  if (fractions[H - 1] != 1.0) throw DomainError("last stick fraction must be 1");
  Eigen::VectorXd w(H);
  double remaining = 1.0;
  for (Eigen::Index h = 0; h < H; ++h) {
    w[h] = fractions[h] * remaining;
    remaining *= 1.0 - fractions[h];
  }
  // Renormalise away rounding so the weights sum to 1.
  w /= w.sum();
  return w;
}

ComponentMarginals ComponentMarginals::from_state(const GmcState& s) {
  ComponentMarginals m;
  const auto H = static_cast<Eigen::Index>(s.H());
  const auto p = static_cast<Eigen::Index>(s.p_star());
  m.weights = s.weights;
  m.mean.resize(H, p);
  m.sd.resize(H, p);
  for (Eigen::Index h = 0; h < H; ++h) {
    m.mean.row(h) = (s.loadings * s.means[h]).transpose();
    Eigen::MatrixXd LD = s.loadings * s.covs[h];
    for (Eigen::Index j = 0; j < p; ++j) {
      double var = LD.row(j).dot(s.loadings.row(j)) + s.sigma2[j];
      if (!(var > 0)) throw NumericError("non-positive component marginal variance");
      m.sd(h, j) = std::sqrt(var);
    }
  }
  return m;
}

double ComponentMarginals::cdf(std::size_t j, double z) const {
  const auto c = static_cast<Eigen::Index>(j);
  double u = 0.0;
  for (Eigen::Index h = 0; h < weights.size(); ++h) {
    if (weights[h] == 0.0) continue;
    u += weights[h] * normal_cdf((z - mean(h, c)) / sd(h, c));
  }
  return std::clamp(u, 0.0, 1.0);
}

double ComponentMarginals::quantile(std::size_t j, double u) const {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("mixture quantile needs u in (0, 1)");
  const auto c = static_cast<Eigen::Index>(j);
  double lo_mean = mean.col(c).minCoeff();
  double hi_mean = mean.col(c).maxCoeff();
  double spread = 10.0 * sd.col(c).maxCoeff();
  double lo = lo_mean - spread;
  double hi = hi_mean + spread;
  double step = spread;
  while (cdf(j, lo) > u) {
    step *= 2.0;
    lo -= step;
  }
  step = spread;
  while (cdf(j, hi) < u) {
    step *= 2.0;
    hi += step;
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kQuantileMaxIter; ++it) {
    mid = 0.5 * (lo + hi);
    double f = cdf(j, mid);
    if (std::abs(f - u) <= kQuantileTol) break;
    if (f < u) lo = mid;
    else hi = mid;
    if (hi - lo <= 0.0) break;
  }
  return mid;
}

double mixture_marginal_cdf(std::size_t j, double z, const GmcState& state) {
  return ComponentMarginals::from_state(state).cdf(j, z);
}

double mixture_marginal_quantile(std::size_t j, double u, const GmcState& state) {
  return ComponentMarginals::from_state(state).quantile(j, u);
}

nlohmann::json state_to_json(const GmcState& s) {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (std::size_t h = 0; h < s.H(); ++h) {
    means.push_back(vector_to_json(s.means[h]));
    covs.push_back(matrix_to_json(s.covs[h]));
  }
  return {{"loadings", matrix_to_json(s.loadings)},
          {"sigma2", vector_to_json(s.sigma2)},
          {"stick", vector_to_json(s.stick)},
          {"weights", vector_to_json(s.weights)},
          {"means", means},
          {"covs", covs},
          {"labels", s.labels},
          {"factors", matrix_to_json(s.factors)},
          {"latent", matrix_to_json(s.latent)},
          {"alpha", s.alpha},
          {"local_scales", matrix_to_json(s.local_scales)},
          {"global_increments", vector_to_json(s.global_increments)},
          {"global_scales", vector_to_json(s.global_scales)}};
}

GmcState state_from_json(const nlohmann::json& j) {
  GmcState s;
  try {
    s.loadings = matrix_from_json(j.at("loadings"));
    const auto k = s.loadings.cols();
    const auto p = s.loadings.rows();
    s.sigma2 = vector_from_json(j.at("sigma2"));
    s.stick = vector_from_json(j.at("stick"));
    s.weights = vector_from_json(j.at("weights"));
    for (const auto& m : j.at("means")) s.means.push_back(vector_from_json(m));
    for (const auto& c : j.at("covs")) s.covs.push_back(matrix_from_json(c));
    s.labels = j.at("labels").get<std::vector<int>>();
    s.factors = matrix_from_json(j.at("factors"), k);
    s.latent = matrix_from_json(j.at("latent"), p);
    s.alpha = j.at("alpha").get<double>();
    s.local_scales = matrix_from_json(j.at("local_scales"));
    s.global_increments = vector_from_json(j.at("global_increments"));
    s.global_scales = vector_from_json(j.at("global_scales"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed state record: ") + e.what());
  }
  if (s.means.size() != s.H() || s.covs.size() != s.H())
    throw FormatError("state record has inconsistent component counts");
  return s;
}

}  // namespace gmc
