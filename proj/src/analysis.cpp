#include "gmc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "gmc/errors.hpp"

namespace gmc {

double t_quantile(double p, double df) {
  if (!std::isfinite(df) || df > 1e7)
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

PooledEstimate rubin_combine(std::span<const double> estimates, std::span<const double> variances,
                             double confidence) {
  const std::size_t m = estimates.size();
  if (m < 2) throw ConfigError("Rubin's rules need at least 2 imputations");
  if (variances.size() != m) throw ConfigError("estimates and variances differ in length");
  if (!(confidence > 0 && confidence < 1)) throw ConfigError("confidence must be in (0, 1)");
  for (double v : variances)
    if (!(v > 0)) throw DomainError("within-imputation variances must be positive");
  const double md = static_cast<double>(m);
  PooledEstimate out;
  for (std::size_t t = 0; t < m; ++t) {
    out.point += estimates[t];
    out.within_var += variances[t];
  }
  out.point /= md;
  out.within_var /= md;
  for (double e : estimates) out.between_var += (e - out.point) * (e - out.point);
  out.between_var /= md - 1.0;
  const double inflated = (1.0 + 1.0 / md) * out.between_var;
  out.total_var = out.within_var + inflated;
  if (out.between_var == 0.0) {
    out.df = std::numeric_limits<double>::infinity();
  } else {
    const double r = 1.0 + out.within_var / inflated;
    out.df = (md - 1.0) * r * r;
  }
  const double half = t_quantile(0.5 * (1.0 + confidence), out.df) * std::sqrt(out.total_var);
  out.lo = out.point - half;
  out.hi = out.point + half;
  return out;
}

std::pair<double, double> OlsFit::interval(Eigen::Index t, double confidence) const {
  const double half = t_quantile(0.5 * (1.0 + confidence), df) * se[t];
  return {coef[t] - half, coef[t] + half};
}

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n) throw ConfigError("OLS design and response differ in length");
  if (n <= p) throw DegenerateError("OLS needs more rows than coefficients");
  Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13)
    throw DegenerateError("OLS design matrix is singular");
  OlsFit fit;
  fit.coef = ldlt.solve(X.transpose() * y);
  fit.df = static_cast<double>(n - p);
  fit.sigma2 = (y - X * fit.coef).squaredNorm() / fit.df;
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p)) * fit.sigma2;
  fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

double sample_quantile_type1(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  if (!(q >= 0 && q <= 1)) throw DomainError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double nq = static_cast<double>(values.size()) * q;
  auto idx = static_cast<std::size_t>(std::ceil(nq - 1e-12));
  idx = std::clamp<std::size_t>(idx, 1, values.size());
  return values[idx - 1];
}

std::pair<double, double> hpd_interval(std::vector<double> samples, double mass) {
  if (samples.empty()) throw DomainError("HPD interval of an empty sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  auto window = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n) - 1e-12));
  window = std::clamp<std::size_t>(window, 1, n);
  std::size_t best = 0;
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + window <= n; ++i) {
    double w = samples[i + window - 1] - samples[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {samples[best], samples[best + window - 1]};
}

std::vector<QuantileSummaryRow> stratified_quantile_summary(
    std::span<const MixedDataset> datasets, const std::vector<std::string>& strata_vars,
    const std::string& target, const std::vector<double>& q) {
  if (datasets.empty()) throw ConfigError("no datasets to summarise");
  const auto& first = datasets.front();
  std::vector<std::size_t> strata_idx;
  for (const auto& name : strata_vars) {
    auto j = first.column_index(name);
    if (!first.schema[j].has_levels())
      throw SchemaError("stratum variable '" + name + "' must be categorical or ordinal");
    strata_idx.push_back(j);
  }
  const std::size_t target_idx = first.column_index(target);

  // Enumerate every level combination so absent strata are still reported.
  std::vector<std::vector<int>> combos{{}};
  for (auto j : strata_idx) {
    std::vector<std::vector<int>> next;
    for (const auto& c : combos)
      for (std::size_t m = 0; m < first.schema[j].levels.size(); ++m) {
        auto e = c;
        e.push_back(static_cast<int>(m));
        next.push_back(std::move(e));
      }
    combos = std::move(next);
  }
  auto label = [&](const std::vector<int>& combo) {
    if (combo.empty()) return std::string("all");
    std::string s;
    for (std::size_t t = 0; t < combo.size(); ++t) {
      if (t) s += ";";
      const auto& spec = first.schema[strata_idx[t]];
      s += spec.name + "=" + spec.levels[static_cast<std::size_t>(combo[t])];
    }
    return s;
  };

  // per (combo, q) -> quantile values across datasets
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> collected;
  for (const auto& ds : datasets) {
    std::vector<std::vector<double>> by_combo(combos.size());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.missing(i, target_idx)) continue;
      std::size_t flat = 0;
      bool ok = true;
      for (std::size_t t = 0; t < strata_idx.size(); ++t) {
        if (ds.missing(i, strata_idx[t])) {
          ok = false;
          break;
        }
        flat = flat * first.schema[strata_idx[t]].levels.size() +
               static_cast<std::size_t>(ds.cells(i, strata_idx[t]));
      }
      if (ok) by_combo[flat].push_back(ds.cells(i, target_idx));
    }
    for (std::size_t c = 0; c < combos.size(); ++c) {
      if (by_combo[c].empty()) continue;
      for (std::size_t a = 0; a < q.size(); ++a)
        collected[{c, a}].push_back(sample_quantile_type1(by_combo[c], q[a]));
    }
  }

  std::vector<QuantileSummaryRow> rows;
  for (std::size_t c = 0; c < combos.size(); ++c)
    for (std::size_t a = 0; a < q.size(); ++a) {
      QuantileSummaryRow row;
      row.stratum = label(combos[c]);
      row.q = q[a];
      auto it = collected.find({c, a});
      if (it != collected.end()) {
        auto& vals = it->second;
        row.datasets = vals.size();
        std::vector<double> sorted = vals;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        row.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        std::tie(row.hpd_lo, row.hpd_hi) = hpd_interval(vals, 0.95);
      } else {
        row.median = row.hpd_lo = row.hpd_hi = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

std::string quantile_summary_to_csv(const std::vector<QuantileSummaryRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "stratum,q,datasets,median,hpd_lo,hpd_hi\n";
  for (const auto& r : rows) {
    out << '"' << r.stratum << "\"," << r.q << ',' << r.datasets << ',';
    if (r.datasets == 0) out << "NA,NA,NA\n";
    else out << r.median << ',' << r.hpd_lo << ',' << r.hpd_hi << '\n';
  }
  return out.str();
}

}  // namespace gmc
