#include "gmc/simbench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "gmc/errors.hpp"
#include "gmc/normal.hpp"
#include "gmc/random.hpp"

namespace gmc {

namespace {

ColumnSpec numeric_column(std::string name, Kind kind) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = kind;
  return c;
}

ColumnSpec categorical_column(std::string name, std::vector<std::string> levels) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = Kind::categorical;
  c.levels = std::move(levels);
  return c;
}

void set_cell(MixedDataset& d, std::size_t i, std::size_t j, double v) {
  d.cells(i, j) = v;
  d.missing(i, j) = false;
}

void clear_cell(MixedDataset& d, std::size_t i, std::size_t j) {
  d.cells(i, j) = std::numeric_limits<double>::quiet_NaN();
  d.missing(i, j) = true;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_sd(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Fraction of `values` <= x; `values` sorted.
double plain_ecdf(const std::vector<double>& values, double x) {
  auto it = std::upper_bound(values.begin(), values.end(), x);
  return static_cast<double>(it - values.begin()) / static_cast<double>(values.size());
}

}  // namespace

// ---------------- study 1 ----------------

void Study1Config::validate() const {
  if (n < 10) throw ConfigError("study1: n must be at least 10");
  if (!(beta >= 0)) throw ConfigError("study1: beta must be non-negative");
}

Schema study1_schema() {
  return {numeric_column("Y1", Kind::continuous), numeric_column("Y2", Kind::count),
          categorical_column("Y3", {"0", "1"})};
}

SimPair gen_study1(const Study1Config& cfg) {
  cfg.validate();
  Rng data_rng = make_rng(cfg.seed, 0);
  Rng mask_rng = make_rng(cfg.seed, 1);
  const std::size_t n = cfg.n;
  std::vector<double> y1(n), y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    y1[i] = draw_normal(data_rng);
    const double rate = 5.0 * std::abs(y1[i]);
    y2[i] = rate > 0 ? static_cast<double>(std::poisson_distribution<long>(rate)(data_rng)) : 0.0;
  }
  const double m2 = mean_of(y2);
  double sd2 = population_sd(y2);
  if (sd2 == 0.0) sd2 = 1.0;
  SimPair out{make_dataset(study1_schema(), n), make_dataset(study1_schema(), n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double p3 = normal_cdf(-0.5 + (y2[i] - m2) / sd2);
    const double y3 = draw_uniform(data_rng) < p3 ? 1.0 : 0.0;
    set_cell(out.full, i, 0, y1[i]);
    set_cell(out.full, i, 1, y2[i]);
    set_cell(out.full, i, 2, y3);
  }
  out.masked = out.full;
  for (std::size_t i = 0; i < n; ++i) {
    const double p_miss = normal_cdf(-0.5 + cfg.beta * std::abs(y1[i]));
    for (std::size_t j = 1; j <= 2; ++j)
      if (draw_uniform(mask_rng) < p_miss) clear_cell(out.masked, i, j);
  }
  return out;
}

double positive_probability(const GmcState& s, std::size_t latent_col) {
  const auto c = static_cast<Eigen::Index>(latent_col);
  const Eigen::RowVectorXd lambda = s.loadings.row(c);
  double below = 0.0;
  for (std::size_t h = 0; h < s.H(); ++h) {
    const double m = lambda.dot(s.means[h]);
    const double v = lambda * s.covs[h] * lambda.transpose() + s.sigma2[c];
    below += s.weights[static_cast<Eigen::Index>(h)] * normal_cdf(-m / std::sqrt(v));
  }
  return 1.0 - below;
}

Study1Report study1_margin_report(const SimPair& pair, const AugmentedView& view,
                                  const std::vector<Draw>& draws, double beta) {
  const auto& full = pair.full;
  const auto& masked = pair.masked;
  if (full.rows() == 0) throw DataError("study1 report: dataset has no rows");
  if (draws.empty()) throw ConfigError("study1 report: no posterior draws");
  const std::size_t y2 = full.column_index("Y2");
  const std::size_t y3 = full.column_index("Y3");

  std::vector<double> all, obs;
  for (std::size_t i = 0; i < full.rows(); ++i) {
    all.push_back(full.cells(i, y2));
    if (!masked.missing(i, y2)) obs.push_back(masked.cells(i, y2));
  }
  if (obs.empty()) throw DataError("study1 report: Y2 has no observed values");
  std::sort(all.begin(), all.end());
  std::sort(obs.begin(), obs.end());
  std::vector<double> support = obs;
  support.erase(std::unique(support.begin(), support.end()), support.end());

  Study1Report r;
  r.n = full.rows();
  r.beta = beta;
  std::vector<double> values(draws.size());
  for (double x : support) {
    CurvePoint pt;
    pt.x = x;
    pt.true_ecdf = plain_ecdf(all, x);
    pt.observed_ecdf = plain_ecdf(obs, x);
    for (std::size_t d = 0; d < draws.size(); ++d) {
      const auto& m = draws[d].margins.at(y2);
      if (!m) throw DomainError("study1 report: draw lacks a Y2 margin");
      values[d] = m->cdf(x);
    }
    pt.ma_mean = mean_of(values);
    pt.ma_lo = sample_quantile_type1(values, 0.025);
    pt.ma_hi = sample_quantile_type1(values, 0.975);
    r.sup_ma = std::max(r.sup_ma, std::abs(pt.ma_mean - pt.true_ecdf));
    r.sup_observed = std::max(r.sup_observed, std::abs(pt.observed_ecdf - pt.true_ecdf));
    r.y2_curve.push_back(pt);
  }

  const std::size_t c3 = view.columns_of.at(y3).at(0);
  for (const auto& d : draws) r.p3_draws.push_back(positive_probability(d.state, c3));
  r.p3_mean = mean_of(r.p3_draws);
  r.p3_lo = sample_quantile_type1(r.p3_draws, 0.025);
  r.p3_hi = sample_quantile_type1(r.p3_draws, 0.975);

  double pos_obs = 0.0, n_obs = 0.0, pos_all = 0.0;
  for (std::size_t i = 0; i < full.rows(); ++i) {
    pos_all += full.cells(i, y3);
    if (!masked.missing(i, y3)) {
      pos_obs += masked.cells(i, y3);
      n_obs += 1.0;
    }
  }
  r.p3_observed = n_obs > 0 ? pos_obs / n_obs : std::numeric_limits<double>::quiet_NaN();
  r.p3_true_sample = pos_all / static_cast<double>(full.rows());
  return r;
}

std::string study1_curve_csv(const Study1Report& r) {
  std::ostringstream out;
  out.precision(10);
  out << "n,beta,x,true_ecdf,observed_ecdf,ma_mean,ma_lo,ma_hi\n";
  for (const auto& p : r.y2_curve)
    out << r.n << ',' << r.beta << ',' << p.x << ',' << p.true_ecdf << ',' << p.observed_ecdf
        << ',' << p.ma_mean << ',' << p.ma_lo << ',' << p.ma_hi << '\n';
  return out.str();
}

// ---------------- study 2 ----------------

void Study2Config::validate() const {
  if (!(snr > 0)) throw ConfigError("study2: snr must be positive");
  if (m < 2) throw ConfigError("study2: m must be at least 2");
  if (beta_true.size() != 7) throw ConfigError("study2: beta_true needs 7 coefficients");
  if (replicates == 0) throw ConfigError("study2: replicates must be positive");
}

Schema study2_schema() {
  return {categorical_column("FI", {"Low", "Middle", "High"}), numeric_column("Age", Kind::count),
          numeric_column("BMI", Kind::continuous), numeric_column("New", Kind::continuous)};
}

MixedDataset synthetic_study2_base(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  Schema schema = study2_schema();
  schema.pop_back();
  MixedDataset base = make_dataset(schema, n);
  // lognormal with mean 28 and sd 7
  const double s2 = std::log1p((7.0 / 28.0) * (7.0 / 28.0));
  const double mu = std::log(28.0) - 0.5 * s2;
  std::uniform_int_distribution<int> age(18, 80);
  for (std::size_t i = 0; i < n; ++i) {
    const double bmi = std::clamp(std::exp(mu + std::sqrt(s2) * draw_normal(rng)), 13.4, 81.2);
    const double bz = (bmi - 28.0) / 7.0;
    Eigen::VectorXd w(3);
    w << 0.3 * std::exp(0.25 * bz), 0.4, 0.3 * std::exp(-0.25 * bz);
    set_cell(base, i, 0, static_cast<double>(draw_categorical(rng, w)));
    set_cell(base, i, 1, static_cast<double>(age(rng)));
    set_cell(base, i, 2, bmi);
  }
  return base;
}

MixedDataset load_study2_base(const std::string& path) {
  Schema schema = study2_schema();
  schema.pop_back();
  // Read with a permissive header match, then project to the three columns.
  auto table = parse_csv(read_text_file(path));
  if (table.empty()) throw FormatError("study2 base: empty file " + path);
  const auto& header = table.front();
  std::vector<std::size_t> idx;
  for (const auto& spec : schema) {
    auto it = std::find(header.begin(), header.end(), spec.name);
    if (it == header.end())
      throw SchemaError("study2 base: missing required column '" + spec.name + "'");
    idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::ostringstream projected;
  projected << "FI,Age,BMI\n";
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != header.size())
      throw FormatError("study2 base: row " + std::to_string(r) + " has wrong length");
    bool skip = false;
    for (auto j : idx)
      if (row[j].empty() || row[j] == "NA") skip = true;
    if (skip) continue;
    projected << row[idx[0]] << ',' << row[idx[1]] << ',' << row[idx[2]] << '\n';
  }
  MixedDataset base = parse_dataset(projected.str(), schema);
  if (base.rows() < 10) throw DataError("study2 base: fewer than 10 complete rows");
  return base;
}

Eigen::MatrixXd study2_design(const MixedDataset& data) {
  const std::size_t fi = data.column_index("FI");
  const std::size_t age = data.column_index("Age");
  const std::size_t bmi = data.column_index("BMI");
  const std::size_t n = data.rows();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (data.missing(i, fi) || data.missing(i, age) || data.missing(i, bmi))
      throw DataError("study2 design: missing covariate in row " + std::to_string(i + 1));
    a[i] = data.cells(i, age);
    b[i] = data.cells(i, bmi);
  }
  const double ma = mean_of(a), mb = mean_of(b);
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  sa = std::sqrt(sa / denom);
  sb = std::sqrt(sb / denom);
  if (!(sa > 0) || !(sb > 0)) throw DegenerateError("study2 design: Age or BMI is constant");
  Eigen::MatrixXd X(n, 7);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int level = static_cast<int>(data.cells(i, fi));
    const double mid = level == 1 ? 1.0 : 0.0;
    const double high = level == 2 ? 1.0 : 0.0;
    const double az = (a[i] - ma) / sa;
    const double bz = (b[i] - mb) / sb;
    X.row(r) << 1.0, mid, high, az, bz, mid * bz, high * bz;
  }
  return X;
}

SimPair gen_study2_replicate(const MixedDataset& base, const Study2Config& cfg, std::size_t r) {
  cfg.validate();
  const std::size_t n = base.rows();
  if (cfg.protected_rows > n) throw ConfigError("study2: protected_rows exceeds the row count");
  Rng rng = make_rng(cfg.seed, 1000 + r);
  SimPair out{make_dataset(study2_schema(), n), make_dataset(study2_schema(), n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) set_cell(out.full, i, j, base.cells(i, j));

  const Eigen::MatrixXd X = study2_design(base);
  const Eigen::VectorXd mu = X * cfg.beta_true;
  const double mean_mu = mu.mean();
  const double var_mu = (mu.array() - mean_mu).square().sum() / static_cast<double>(n - 1);
  const double sigma = std::sqrt(var_mu / cfg.snr);
  for (std::size_t i = 0; i < n; ++i)
    set_cell(out.full, i, 3, mu[static_cast<Eigen::Index>(i)] + sigma * draw_normal(rng));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> exempt(n, false);
  for (std::size_t t = 0; t < cfg.protected_rows; ++t) exempt[order[t]] = true;

  out.masked = out.full;
  const double rho = 0.3;
  const std::size_t bmi_col = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double bz = X(static_cast<Eigen::Index>(i), 4);
    const double g = draw_normal(rng);
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == bmi_col) continue;
      const double omega = std::sqrt(rho) * g + std::sqrt(1.0 - rho) * draw_normal(rng) - 0.2;
      const double u = draw_uniform(rng);
      if (!exempt[i] && u < normal_cdf(-0.7 + bz + omega)) clear_cell(out.masked, i, j);
    }
  }
  return out;
}

std::vector<SimPair> gen_study2(const Study2Config& cfg) {
  cfg.validate();
  const MixedDataset base =
      cfg.base_csv ? load_study2_base(*cfg.base_csv) : synthetic_study2_base(cfg.synthetic_n, cfg.seed);
  std::vector<SimPair> reps;
  reps.reserve(cfg.replicates);
  for (std::size_t r = 0; r < cfg.replicates; ++r) reps.push_back(gen_study2_replicate(base, cfg, r));
  return reps;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::gmc_ma: return "gmc_ma";
    case Method::gmc_ecdf: return "gmc_ecdf";
    case Method::complete_case: return "complete_case";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  if (s == "gmc_ma") return Method::gmc_ma;
  if (s == "gmc_ecdf") return Method::gmc_ecdf;
  if (s == "complete_case") return Method::complete_case;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

std::optional<ReplicateFit> complete_case_fit(const MixedDataset& masked, double confidence) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < masked.rows(); ++i) {
    bool complete = true;
    for (std::size_t j = 0; j < masked.cols(); ++j) complete = complete && !masked.missing(i, j);
    if (complete) rows.push_back(i);
  }
  if (rows.size() <= 7) return std::nullopt;
  MixedDataset cc = make_dataset(masked.schema, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < masked.cols(); ++j) set_cell(cc, t, j, masked.cells(rows[t], j));
  const Eigen::MatrixXd X = study2_design(cc);
  const Eigen::VectorXd y = cc.cells.col(static_cast<Eigen::Index>(cc.column_index("New")));
  const OlsFit fit = ols(X, y);
  ReplicateFit out;
  out.method = Method::complete_case;
  out.ok = true;
  out.estimate = fit.coef;
  out.lo.resize(7);
  out.hi.resize(7);
  for (Eigen::Index t = 0; t < 7; ++t) std::tie(out.lo[t], out.hi[t]) = fit.interval(t, confidence);
  return out;
}

ReplicateFit pooled_fit(const std::vector<CompletedDataset>& completed, double confidence) {
  const std::size_t m = completed.size();
  std::vector<Eigen::VectorXd> est, var;
  for (const auto& cd : completed) {
    const Eigen::MatrixXd X = study2_design(cd.data);
    const Eigen::VectorXd y = cd.data.cells.col(static_cast<Eigen::Index>(cd.data.column_index("New")));
    const OlsFit fit = ols(X, y);
    est.push_back(fit.coef);
    var.push_back(fit.se.array().square());
  }
  ReplicateFit out;
  out.ok = true;
  out.estimate.resize(7);
  out.lo.resize(7);
  out.hi.resize(7);
  std::vector<double> e(m), v(m);
  for (Eigen::Index t = 0; t < 7; ++t) {
    for (std::size_t d = 0; d < m; ++d) {
      e[d] = est[d][t];
      v[d] = var[d][t];
    }
    const PooledEstimate p = rubin_combine(e, v, confidence);
    out.estimate[t] = p.point;
    out.lo[t] = p.lo;
    out.hi[t] = p.hi;
  }
  return out;
}

namespace {

std::vector<ReplicateFit> fit_one_replicate(const SimPair& pair, std::size_t r,
                                            const BenchmarkConfig& cfg) {
  std::vector<ReplicateFit> out;
  const bool need_chain = std::any_of(cfg.methods.begin(), cfg.methods.end(),
                                      [](Method m) { return m != Method::complete_case; });
  std::vector<Draw> draws;
  std::string chain_failure;
  AugmentedView view;
  if (need_chain) {
    try {
      view = expand_rpl(pair.masked);
      ChainConfig chain = cfg.chain;
      chain.seed = derive_seed(cfg.seed, r);
      chain.thin = std::max(1, (chain.n_iter - chain.burn_in) / static_cast<int>(cfg.m));
      auto result = run_chain(pair.masked, view, chain);
      draws = std::move(result.draws);
      if (draws.size() > cfg.m) draws.erase(draws.begin(), draws.end() - static_cast<long>(cfg.m));
    } catch (const Error& e) {
      chain_failure = e.what();
    }
  }
  for (Method m : cfg.methods) {
    ReplicateFit fit;
    fit.replicate = r;
    fit.method = m;
    try {
      if (m == Method::complete_case) {
        auto cc = complete_case_fit(pair.masked, cfg.confidence);
        if (!cc) {
          fit.failure = "too few complete cases";
        } else {
          fit = *cc;
          fit.replicate = r;
        }
      } else if (!chain_failure.empty()) {
        fit.failure = chain_failure;
      } else {
        const MarginKind kind = m == Method::gmc_ma ? MarginKind::margin_adjust : MarginKind::ecdf;
        auto completed = multiple_impute(draws, pair.masked, view, derive_seed(cfg.seed, 100000 + r), kind);
        fit = pooled_fit(completed, cfg.confidence);
        fit.replicate = r;
        fit.method = m;
      }
    } catch (const Error& e) {
      fit.ok = false;
      fit.failure = e.what();
    }
    out.push_back(std::move(fit));
  }
  return out;
}

}  // namespace

std::vector<ReplicateFit> fit_replicates(const std::vector<SimPair>& reps,
                                         const BenchmarkConfig& cfg) {
  if (cfg.m < 2) throw ConfigError("benchmark: m must be at least 2");
  if (cfg.methods.empty()) throw ConfigError("benchmark: no methods requested");
  std::vector<std::vector<ReplicateFit>> per(reps.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t r = next++; r < reps.size(); r = next++) per[r] = fit_one_replicate(reps[r], r, cfg);
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(1, reps.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<ReplicateFit> out;
  for (auto& v : per)
    for (auto& f : v) out.push_back(std::move(f));
  return out;
}

std::vector<MetricRow> summarize_fits(const std::vector<ReplicateFit>& fits,
                                      const Eigen::VectorXd& beta_true) {
  std::vector<MetricRow> rows;
  for (Method m : {Method::gmc_ma, Method::gmc_ecdf, Method::complete_case}) {
    std::vector<const ReplicateFit*> ok;
    std::size_t failures = 0;
    bool present = false;
    for (const auto& f : fits) {
      if (f.method != m) continue;
      present = true;
      if (f.ok) ok.push_back(&f);
      else ++failures;
    }
    if (!present) continue;
    for (Eigen::Index t = 0; t < beta_true.size(); ++t) {
      MetricRow row;
      row.method = m;
      row.coefficient = kStudy2Coefficients[static_cast<std::size_t>(t)];
      row.truth = beta_true[t];
      row.replicates = ok.size();
      row.failures = failures;
      for (const auto* f : ok) {
        row.mean_estimate += f->estimate[t];
        row.abs_bias += std::abs(f->estimate[t] - beta_true[t]);
        row.coverage += (f->lo[t] <= beta_true[t] && beta_true[t] <= f->hi[t]) ? 1.0 : 0.0;
        row.width += f->hi[t] - f->lo[t];
      }
      if (!ok.empty()) {
        const double k = static_cast<double>(ok.size());
        row.mean_estimate /= k;
        row.abs_bias /= k;
        row.coverage /= k;
        row.width /= k;
      } else {
        row.mean_estimate = row.abs_bias = row.coverage = row.width =
            std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<MetricRow> run_benchmark(const std::vector<SimPair>& reps, const Eigen::VectorXd& beta_true,
                                     const BenchmarkConfig& cfg) {
  return summarize_fits(fit_replicates(reps, cfg), beta_true);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out.precision(8);
  out << "method,coefficient,truth,mean_estimate,abs_bias,coverage,width,replicates,failures\n";
  for (const auto& r : rows)
    out << to_string(r.method) << ',' << r.coefficient << ',' << r.truth << ',' << r.mean_estimate
        << ',' << r.abs_bias << ',' << r.coverage << ',' << r.width << ',' << r.replicates << ','
        << r.failures << '\n';
  return out.str();
}

}  // namespace gmc
