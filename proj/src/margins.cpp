#include "gmc/margins.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmc/errors.hpp"

namespace gmc {

namespace {

constexpr double kInverseEps = 1e-12;

struct SortedColumn {
  std::vector<double> y;
  std::vector<double> z;
};

SortedColumn observed_sorted(const MixedDataset& data, std::size_t variable,
                             const Eigen::VectorXd* latent) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (!data.missing(i, variable)) rows.push_back(i);
  if (rows.empty())
    throw DegenerateError("variable '" + data.schema[variable].name + "' has no observed values");
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return data.cells(a, variable) < data.cells(b, variable);
  });
  SortedColumn out;
  for (auto i : rows) {
    out.y.push_back(data.cells(i, variable));
    if (latent) out.z.push_back((*latent)[static_cast<Eigen::Index>(i)]);
  }
  return out;
}

}  // namespace

std::string_view to_string(MarginKind kind) {
  return kind == MarginKind::ecdf ? "ecdf" : "margin_adjust";
}

MarginKind margin_kind_from_string(std::string_view s) {
  if (s == "margin_adjust") return MarginKind::margin_adjust;
  if (s == "ecdf") return MarginKind::ecdf;
  throw ConfigError("unknown margin kind '" + std::string(s) + "'");
}

MarginEstimate::MarginEstimate(std::string variable, Kind variable_kind, MarginKind kind,
                               std::vector<double> x, std::vector<double> u, double support_lo,
                               double support_hi, std::optional<double> clamp_lo,
                               std::optional<double> clamp_hi)
    : variable_(std::move(variable)),
      variable_kind_(variable_kind),
      kind_(kind),
      x_(std::move(x)),
      u_(std::move(u)),
      lo_(support_lo),
      hi_(support_hi),
      clamp_lo_(clamp_lo),
      clamp_hi_(clamp_hi) {
  if (x_.empty() || x_.size() != u_.size()) throw DomainError("margin needs matching knots");
  for (std::size_t k = 0; k < u_.size(); ++k) {
    if (!(u_[k] > 0.0 && u_[k] <= 1.0)) throw DomainError("margin knot value outside (0, 1]");
    if (k && u_[k] < u_[k - 1]) throw DomainError("margin knot values must be nondecreasing");
  }
  std::vector<double> cx, cu;
  if (lo_ < x_.front()) {
    cx.push_back(lo_);
    cu.push_back(0.0);
  }
  cx.insert(cx.end(), x_.begin(), x_.end());
  cu.insert(cu.end(), u_.begin(), u_.end());
  if (hi_ > x_.back()) {
    cx.push_back(hi_);
    cu.push_back(1.0);
  }
  curve_ = MonotoneCubic(std::move(cx), std::move(cu));
}

double MarginEstimate::inverse(double u) const {
  u = std::clamp(u, kInverseEps, 1.0 - kInverseEps);
  double x = curve_.inverse(u);
  if (variable_kind_ == Kind::count || variable_kind_ == Kind::ordinal) x = std::ceil(x - 1e-9);
  if (clamp_lo_) x = std::max(x, *clamp_lo_);
  if (clamp_hi_) x = std::min(x, *clamp_hi_);
  return x;
}

nlohmann::json MarginEstimate::to_json() const {
  nlohmann::json j{{"variable", variable_},
                   {"variable_kind", std::string(gmc::to_string(variable_kind_))},
                   {"kind", std::string(gmc::to_string(kind_))},
                   {"x", x_},
                   {"u", u_},
                   {"support", {lo_, hi_}}};
  j["clamp"] = {clamp_lo_ ? nlohmann::json(*clamp_lo_) : nlohmann::json(nullptr),
                clamp_hi_ ? nlohmann::json(*clamp_hi_) : nlohmann::json(nullptr)};
  return j;
}

MarginEstimate MarginEstimate::from_json(const nlohmann::json& j) {
  try {
    std::optional<double> clo, chi;
    if (j.contains("clamp")) {
      if (!j["clamp"][0].is_null()) clo = j["clamp"][0].get<double>();
      if (!j["clamp"][1].is_null()) chi = j["clamp"][1].get<double>();
    }
    return MarginEstimate(j.at("variable").get<std::string>(),
                          kind_from_string(j.at("variable_kind").get<std::string>()),
                          margin_kind_from_string(j.at("kind").get<std::string>()),
                          j.at("x").get<std::vector<double>>(), j.at("u").get<std::vector<double>>(),
                          j.at("support")[0].get<double>(), j.at("support")[1].get<double>(), clo,
                          chi);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed margin record: ") + e.what());
  }
}

std::vector<std::pair<double, double>> margin_knot_latents(const MixedDataset& data,
                                                           std::size_t variable,
                                                           const Eigen::VectorXd& latent_column) {
  auto col = observed_sorted(data, variable, &latent_column);
  std::vector<std::pair<double, double>> out;
  double running = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < col.y.size(); ++k) {
    running = std::max(running, col.z[k]);
    bool last_of_value = k + 1 == col.y.size() || col.y[k + 1] != col.y[k];
    if (last_of_value) out.emplace_back(col.y[k], running);
  }
  return out;
}

double margin_knot_latent_at(const MixedDataset& data, std::size_t variable,
                             const Eigen::VectorXd& latent_column, double x) {
  auto col = observed_sorted(data, variable, &latent_column);
  const double y_min = col.y.front();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < col.y.size(); ++k)
    if (col.y[k] <= x || col.y[k] == y_min) best = std::max(best, col.z[k]);
  return best;
}

std::pair<double, double> support_anchors(const MixedDataset& data, std::size_t variable) {
  const auto& spec = data.schema[variable];
  auto col = observed_sorted(data, variable, nullptr);
  const double y_min = col.y.front();
  const double y_max = col.y.back();
  const double range = y_max - y_min;
  double lo, hi;
  switch (spec.kind) {
    case Kind::ordinal:
      lo = -1.0;
      hi = static_cast<double>(spec.levels.size()) - 1.0;
      break;
    case Kind::count: {
      lo = spec.effective_lo() ? *spec.effective_lo() : std::min(0.0, y_min);
      hi = spec.effective_hi() ? *spec.effective_hi()
                               : y_max + std::ceil(0.1 * std::max(range, 1.0));
      // Step-CDF convention: mass at the smallest value needs an anchor below it.
      if (lo >= y_min) lo = y_min - 1.0;
      break;
    }
    default: {
      const double pad = 0.1 * (range > 0 ? range : std::max(1.0, std::abs(y_min)));
      lo = spec.effective_lo() ? *spec.effective_lo() : y_min - pad;
      hi = spec.effective_hi() ? *spec.effective_hi() : y_max + pad;
    }
  }
  return {lo, hi};
}

namespace {

std::pair<std::optional<double>, std::optional<double>> clamp_bounds(const ColumnSpec& spec) {
  if (spec.kind == Kind::ordinal)
    return {0.0, static_cast<double>(spec.levels.size()) - 1.0};
  return {spec.effective_lo(), spec.effective_hi()};
}

std::size_t latent_column_of(const AugmentedView& view, std::size_t variable) {
  const auto& cols = view.columns_of.at(variable);
  if (cols.size() != 1 || view.columns[cols[0]].role != LatentRole::rank)
    throw DomainError("margin requested for an orthant-coded variable");
  return cols[0];
}

}  // namespace

MarginEstimate margin_adjust(const MixedDataset& data, const AugmentedView& view,
                             std::size_t variable, const GmcState& state,
                             const ComponentMarginals& marginals) {
  const std::size_t j = latent_column_of(view, variable);
  Eigen::VectorXd zcol = state.latent.col(static_cast<Eigen::Index>(j));
  auto knots = margin_knot_latents(data, variable, zcol);
  std::vector<double> x, u;
  x.reserve(knots.size());
  u.reserve(knots.size());
  for (const auto& [xv, zv] : knots) {
    x.push_back(xv);
    // Keep knots inside (0, 1]; psi can underflow in the far lower tail.
    u.push_back(std::max(marginals.cdf(j, zv), 1e-300));
  }
  auto [lo, hi] = support_anchors(data, variable);
  auto [clo, chi] = clamp_bounds(data.schema[variable]);
  return MarginEstimate(data.schema[variable].name, data.schema[variable].kind,
                        MarginKind::margin_adjust, std::move(x), std::move(u), lo, hi, clo, chi);
}

MarginEstimate margin_adjust(const MixedDataset& data, const AugmentedView& view,
                             std::size_t variable, const GmcState& state) {
  return margin_adjust(data, view, variable, state, ComponentMarginals::from_state(state));
}

MarginEstimate ecdf(const MixedDataset& data, std::size_t variable) {
  auto col = observed_sorted(data, variable, nullptr);
  const double denom = static_cast<double>(col.y.size()) + 1.0;
  std::vector<double> x, u;
  for (std::size_t k = 0; k < col.y.size(); ++k) {
    if (k + 1 == col.y.size() || col.y[k + 1] != col.y[k]) {
      x.push_back(col.y[k]);
      u.push_back(static_cast<double>(k + 1) / denom);
    }
  }
  auto [lo, hi] = support_anchors(data, variable);
  auto [clo, chi] = clamp_bounds(data.schema[variable]);
  return MarginEstimate(data.schema[variable].name, data.schema[variable].kind, MarginKind::ecdf,
                        std::move(x), std::move(u), lo, hi, clo, chi);
}

double margin_inverse(const MarginEstimate& est, double u) { return est.inverse(u); }

MarginSet margin_adjust_all(const MixedDataset& data, const AugmentedView& view,
                            const GmcState& state) {
  auto marginals = ComponentMarginals::from_state(state);
  MarginSet out(data.cols());
  for (std::size_t v = 0; v < data.cols(); ++v)
    if (data.schema[v].rank_based()) out[v] = margin_adjust(data, view, v, state, marginals);
  return out;
}

MarginSet ecdf_all(const MixedDataset& data) {
  MarginSet out(data.cols());
  for (std::size_t v = 0; v < data.cols(); ++v)
    if (data.schema[v].rank_based()) out[v] = ecdf(data, v);
  return out;
}

}  // namespace gmc
