#include "gmc/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "gmc/errors.hpp"
#include "gmc/normal.hpp"

namespace gmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSigma2Floor = 1e-8;
constexpr double kStickClamp = 1e-12;
constexpr double kJitter = 1e-8;
constexpr double kFarTail = 5.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Standard normal restricted to (a, b) with a >= kFarTail.
double far_tail_draw(double a, double b, Rng& rng) {
  if (std::isfinite(b) && (b - a) * a <= 1.0) {
    // Uniform proposal on a short window; density ratio exp((a^2 - x^2)/2).
    for (;;) {
      double x = a + (b - a) * draw_uniform(rng);
      if (draw_uniform(rng) <= std::exp(0.5 * (a * a - x * x))) return x;
    }
  }
  // Exponential proposal with the optimal rate (Robert, 1995).
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    double x = a - std::log(draw_uniform(rng)) / rate;
    double diff = x - rate;
    if (draw_uniform(rng) <= std::exp(-0.5 * diff * diff) && x < b) return x;
  }
}

// Standard normal restricted to (a, b).
double standard_truncated_draw(double a, double b, Rng& rng) {
  if (a == -kInf && b == kInf) return draw_normal(rng);
  if (a >= kFarTail) return far_tail_draw(a, b, rng);
  if (b <= -kFarTail) return -far_tail_draw(-b, -a, rng);
  if (a > 0.0) {
    // Upper half: work with survival probabilities.
    double pa = normal_sf(a);
    double pb = normal_sf(b);
    if (!(pa > pb)) return a + (b - a) * draw_uniform(rng);
    double u = pb + (pa - pb) * draw_uniform(rng);
    return -normal_quantile(u);
  }
  double pa = normal_cdf(a);
  double pb = normal_cdf(b);
  if (!(pb > pa)) return a + (b - a) * draw_uniform(rng);
  double u = pa + (pb - pa) * draw_uniform(rng);
  return normal_quantile(u);
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  llt.compute(m + kJitter * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  if (llt.info() != Eigen::Success) throw NumericError(std::string("Cholesky failed: ") + what);
  return llt;
}

Eigen::MatrixXd checked_inverse_wishart(Rng& rng, double dof, const Eigen::MatrixXd& scale) {
  try {
    return draw_inverse_wishart(rng, dof, scale);
  } catch (const NumericError&) {
    return draw_inverse_wishart(rng, dof,
                                scale + kJitter * Eigen::MatrixXd::Identity(scale.rows(), scale.cols()));
  }
}

}  // namespace

void ChainConfig::validate(std::size_t p_star) const {
  if (n_iter < 1) throw ConfigError("n_iter must be >= 1");
  if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (!(burn_in < n_iter))
    throw ConfigError("burn_in (" + std::to_string(burn_in) + ") must be < n_iter (" +
                      std::to_string(n_iter) + ")");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  hyper.validate(p_star);
}

std::size_t ChainConfig::retained_count() const {
  return static_cast<std::size_t>((n_iter - burn_in) / thin);
}

TruncationBound rank_bounds(std::size_t i, const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  TruncationBound b;
  const double yi = y[static_cast<Eigen::Index>(i)];
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    if (static_cast<std::size_t>(k) == i || std::isnan(y[k])) continue;
    if (y[k] < yi) b.lo = std::max(b.lo, z[k]);
    else if (y[k] > yi) b.hi = std::min(b.hi, z[k]);
  }
  return b;
}

TruncationBound rank_bounds(std::size_t i, std::size_t latent_col, const Eigen::MatrixXd& latent,
                            const MixedDataset& data, const AugmentedView& view) {
  const auto& col = view.columns.at(latent_col);
  if (col.role != LatentRole::rank) throw DomainError("rank_bounds on an orthant column");
  if (data.missing(i, col.source)) throw DomainError("rank_bounds on a missing cell");
  Eigen::VectorXd y = data.cells.col(static_cast<Eigen::Index>(col.source));
  Eigen::VectorXd z = latent.col(static_cast<Eigen::Index>(latent_col));
  return rank_bounds(i, z, y);
}

TruncationBound orthant_bounds(int gamma) {
  if (gamma == 1) return {0.0, kInf};
  if (gamma == 0) return {-kInf, 0.0};
  throw DomainError("orthant_bounds on an unset indicator");
}

double sample_truncated_normal(double mean, double variance, const TruncationBound& b, Rng& rng) {
  if (!(variance > 0) || !std::isfinite(variance))
    throw DomainError("truncated normal needs a positive variance");
  if (!(b.lo < b.hi)) throw DomainError("truncation bound requires lo < hi");
  const double sd = std::sqrt(variance);
  const double a = (b.lo - mean) / sd;
  const double c = (b.hi - mean) / sd;
  for (int attempt = 0; attempt < 16; ++attempt) {
    double z = mean + sd * standard_truncated_draw(a, c, rng);
    if (z > b.lo && z < b.hi) return z;
  }
  // Interval narrower than rounding allows; fall back to its midpoint region.
  double lo = std::isfinite(b.lo) ? b.lo : b.hi - sd;
  double hi = std::isfinite(b.hi) ? b.hi : b.lo + sd;
  double z = lo + (hi - lo) * draw_uniform(rng);
  if (z > b.lo && z < b.hi) return z;
  return 0.5 * (lo + hi);
}

namespace {

std::size_t unique_observed(const MixedDataset& data, std::size_t v) {
  std::set<double> values;
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (!data.missing(i, v)) values.insert(data.cells(i, v));
  return values.size();
}

void standardise_observed(Eigen::MatrixXd& Z, const MixedDataset& data, std::size_t v,
                          std::size_t c) {
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.missing(i, v)) continue;
    sum += Z(i, c);
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (!data.missing(i, v)) sum2 += (Z(i, c) - mean) * (Z(i, c) - mean);
  const double sd = std::sqrt(sum2 / static_cast<double>(n));
  for (std::size_t i = 0; i < data.rows(); ++i)
    if (!data.missing(i, v)) Z(i, c) = (Z(i, c) - mean) / sd;
}

}  // namespace

Eigen::MatrixXd init_latent(const MixedDataset& data, const AugmentedView& view,
                            const Hyperparams& hyper, Rng& rng) {
  const std::size_t n = data.rows();
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(view.p_star()));
  for (std::size_t v = 0; v < data.cols(); ++v) {
    const auto& spec = data.schema[v];
    const auto& cols = view.columns_of[v];
    if (spec.rank_based()) {
      const std::size_t c = cols[0];
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < n; ++i)
        if (!data.missing(i, v)) rows.push_back(i);
      const std::size_t uniq = unique_observed(data, v);
      if (rows.size() < 2 || uniq < 2)
        throw DegenerateError("variable '" + spec.name +
                              "' needs at least two distinct observed values");
      if (uniq > static_cast<std::size_t>(hyper.resample_threshold)) {
        // Held fixed during sampling: standardised raw values keep shape.
        for (auto i : rows) Z(i, c) = data.cells(i, v);
      } else {
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
          return data.cells(a, v) < data.cells(b, v);
        });
        const double n_obs = static_cast<double>(rows.size());
        for (std::size_t s = 0; s < rows.size();) {
          std::size_t e = s;
          while (e + 1 < rows.size() && data.cells(rows[e + 1], v) == data.cells(rows[s], v)) ++e;
          const double mid_rank = 0.5 * static_cast<double>(s + e) + 1.0;
          const double score = normal_quantile((mid_rank - 0.5) / n_obs);
          for (std::size_t t = s; t <= e; ++t) Z(rows[t], c) = score;
          s = e + 1;
        }
      }
      standardise_observed(Z, data, v, c);
      for (std::size_t i = 0; i < n; ++i)
        if (data.missing(i, v)) Z(i, c) = draw_normal(rng);
      continue;
    }
    // Orthant-coded: observed cells in their orthant, missing cells at a random level.
    const std::size_t k_levels = spec.levels.size();
    for (std::size_t i = 0; i < n; ++i) {
      int level;
      if (data.missing(i, v)) {
        level = static_cast<int>(std::min<std::size_t>(
            static_cast<std::size_t>(draw_uniform(rng) * static_cast<double>(k_levels)),
            k_levels - 1));
      } else {
        level = static_cast<int>(data.cells(i, v));
      }
      for (auto c : cols) {
        const auto& col = view.columns[c];
        bool positive = col.level == level;
        double mag = std::abs(draw_normal(rng));
        Z(i, c) = positive ? mag : -mag;
      }
    }
  }
  return Z;
}

Eigen::MatrixXd init_latent(const MixedDataset& data, const AugmentedView& view, Rng& rng) {
  return init_latent(data, view, default_hyperparams(view.p_star()), rng);
}

GmcState init_state(const MixedDataset& data, const AugmentedView& view,
                    const Hyperparams& hyper, Rng& rng) {
  hyper.validate(view.p_star());
  GmcState s;
  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto p = static_cast<Eigen::Index>(view.p_star());
  const auto k = static_cast<Eigen::Index>(hyper.k);
  const auto H = static_cast<Eigen::Index>(hyper.H);
  s.latent = init_latent(data, view, hyper, rng);

  // Principal components of the initial latents.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(s.latent, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double root_n = std::sqrt(static_cast<double>(std::max<Eigen::Index>(n, 1)));
  s.factors = svd.matrixU().leftCols(k) * root_n;
  s.loadings = svd.matrixV().leftCols(k) * svd.singularValues().head(k).asDiagonal() / root_n;
  Eigen::MatrixXd resid = s.latent - s.factors * s.loadings.transpose();
  s.sigma2 = (resid.array().square().colwise().sum() / static_cast<double>(std::max<Eigen::Index>(n, 1)))
                 .transpose()
                 .max(0.05)
                 .matrix();

  // k-means on the factors seeds the cluster structure.
  const Eigen::Index K0 = std::min<Eigen::Index>({H, 10, std::max<Eigen::Index>(n, 1)});
  std::vector<Eigen::VectorXd> centres;
  centres.push_back(s.factors.row(static_cast<Eigen::Index>(draw_uniform(rng) * n)).transpose());
  Eigen::VectorXd dist2(n);
  while (static_cast<Eigen::Index>(centres.size()) < K0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = kInf;
      for (const auto& c : centres) best = std::min(best, (s.factors.row(i).transpose() - c).squaredNorm());
      dist2[i] = best;
    }
    if (!(dist2.sum() > 0)) break;
    centres.push_back(s.factors.row(static_cast<Eigen::Index>(draw_categorical(rng, dist2))).transpose());
  }
  const auto K = static_cast<Eigen::Index>(centres.size());
  s.labels.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 25; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = kInf;
      for (Eigen::Index h = 0; h < K; ++h) {
        double d = (s.factors.row(i).transpose() - centres[h]).squaredNorm();
        if (d < best) {
          best = d;
          s.labels[i] = static_cast<int>(h);
        }
      }
    }
    for (Eigen::Index h = 0; h < K; ++h) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
      int cnt = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (s.labels[i] == h) {
          sum += s.factors.row(i).transpose();
          ++cnt;
        }
      if (cnt) centres[h] = sum / cnt;
    }
  }

  s.means.assign(static_cast<std::size_t>(H), hyper.mu0);
  s.covs.assign(static_cast<std::size_t>(H),
                hyper.delta * hyper.delta * Eigen::MatrixXd::Identity(k, k));
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(H);
  for (int c : s.labels) counts[c] += 1.0;
  for (Eigen::Index h = 0; h < K; ++h) {
    if (counts[h] < 1) continue;
    Eigen::MatrixXd block(static_cast<Eigen::Index>(counts[h]), k);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (s.labels[i] == h) block.row(r++) = s.factors.row(i);
    Eigen::VectorXd mu = block.colwise().mean().transpose();
    s.means[h] = mu;
    if (counts[h] > static_cast<double>(k)) {
      Eigen::MatrixXd centred = block.rowwise() - mu.transpose();
      s.covs[h] = centred.transpose() * centred / counts[h] +
                  0.1 * Eigen::MatrixXd::Identity(k, k);
    } else {
      s.covs[h] = Eigen::MatrixXd::Identity(k, k);
    }
  }
  Eigen::VectorXd w = (counts.array() + 0.5) / (counts.sum() + 0.5 * static_cast<double>(H));
  s.stick.resize(H);
  double remaining = 1.0;
  for (Eigen::Index h = 0; h < H; ++h) {
    s.stick[h] = h + 1 == H ? 1.0 : std::clamp(w[h] / remaining, 0.0, 1.0);
    remaining -= w[h];
  }
  s.weights = stick_break(s.stick);
  s.alpha = 1.0;
  s.local_scales = Eigen::MatrixXd::Ones(p, k);
  s.global_increments = Eigen::VectorXd::Ones(k);
  s.global_scales = Eigen::VectorXd::Ones(k);
  return s;
}

Eigen::VectorXd level_probabilities(const AugmentedView& view, const GmcState& state,
                                    std::size_t variable, std::size_t row) {
  const auto& cols = view.columns_of.at(variable);
  const auto i = static_cast<Eigen::Index>(row);
  auto standardised_mean = [&](std::size_t c) {
    const auto cc = static_cast<Eigen::Index>(c);
    return state.factors.row(i).dot(state.loadings.row(cc)) / std::sqrt(state.sigma2[cc]);
  };
  if (cols.size() == 1) {
    const auto& col = view.columns[cols[0]];
    if (col.role != LatentRole::binary) throw DomainError("level probabilities on a rank column");
    double p1 = normal_cdf(standardised_mean(cols[0]));
    Eigen::VectorXd out(2);
    out << 1.0 - p1, p1;
    return out;
  }
  const auto K = static_cast<Eigen::Index>(cols.size());
  Eigen::VectorXd log_pos(K), log_neg(K);
  for (Eigen::Index m = 0; m < K; ++m) {
    double t = standardised_mean(cols[m]);
    log_pos[m] = normal_log_cdf(t);   // P(z > 0)
    log_neg[m] = normal_log_cdf(-t);  // P(z < 0)
  }
  const double neg_total = log_neg.sum();
  Eigen::VectorXd logw = log_pos - log_neg + Eigen::VectorXd::Constant(K, neg_total);
  Eigen::VectorXd w = (logw.array() - logw.maxCoeff()).exp();
  return w / w.sum();
}

GibbsSampler::GibbsSampler(const MixedDataset& data, const AugmentedView& view, Hyperparams hyper)
    : data_(data), view_(view), hyper_(std::move(hyper)) {
  const std::size_t p = view.p_star();
  resample_.assign(p, false);
  rank_.resize(p);
  for (std::size_t c = 0; c < p; ++c) {
    const auto& col = view.columns[c];
    if (col.role != LatentRole::rank) continue;
    const std::size_t v = col.source;
    std::vector<double> values;
    for (std::size_t i = 0; i < data.rows(); ++i)
      if (!data.missing(i, v)) values.push_back(data.cells(i, v));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    resample_[c] = values.size() <= static_cast<std::size_t>(hyper_.resample_threshold);
    auto& rc = rank_[c];
    rc.level_of_row.assign(data.rows(), -1);
    rc.rows_of_level.resize(values.size());
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (data.missing(i, v)) continue;
      auto it = std::lower_bound(values.begin(), values.end(), data.cells(i, v));
      int level = static_cast<int>(it - values.begin());
      rc.level_of_row[i] = level;
      rc.rows_of_level[static_cast<std::size_t>(level)].push_back(i);
    }
  }
  std::map<std::vector<bool>, std::size_t> index;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::vector<bool> mask(data.cols());
    for (std::size_t v = 0; v < data.cols(); ++v) mask[v] = data.missing(i, v);
    auto [it, added] = index.emplace(mask, patterns_.size());
    if (added) {
      Pattern pat;
      for (std::size_t c = 0; c < p; ++c)
        if (!mask[view.columns[c].source]) pat.observed.push_back(c);
      for (std::size_t v = 0; v < data.cols(); ++v)
        if (mask[v]) pat.missing_vars.push_back(v);
      patterns_.push_back(std::move(pat));
    }
    patterns_[it->second].rows.push_back(i);
  }
}

void GibbsSampler::sample_rows_blocked(GmcState& s, Rng& rng) const {
  const auto H = static_cast<Eigen::Index>(s.H());
  const auto k = static_cast<Eigen::Index>(s.k());
  std::vector<Eigen::MatrixXd> cov_inv(H);
  for (Eigen::Index h = 0; h < H; ++h) {
    if (!(s.weights[h] > 0)) continue;
    auto llt = checked_llt(s.covs[h], "component covariance");
    cov_inv[h] = llt.solve(Eigen::MatrixXd::Identity(k, k));
  }
  // Per pattern and component: observed-margin precision times Lambda_o, and
  // the factor precision given the observed cells.
  struct PatternTerms {
    Eigen::MatrixXd Lo, scaled;
    std::vector<Eigen::MatrixXd> marg_solve, prec_chol;
  };
  std::vector<PatternTerms> terms(patterns_.size());
  // Collapsed statistics for the component means.
  std::vector<Eigen::MatrixXd> info(H, Eigen::MatrixXd::Zero(k, k));
  std::vector<Eigen::VectorXd> shift(H, Eigen::VectorXd::Zero(k));

  // Labels, with factors and missing cells integrated out.
  Eigen::VectorXd logp(H), prob(H);
  for (std::size_t q = 0; q < patterns_.size(); ++q) {
    const auto& pat = patterns_[q];
    auto& t = terms[q];
    const auto po = static_cast<Eigen::Index>(pat.observed.size());
    t.Lo.resize(po, k);
    Eigen::VectorXd so(po);
    for (Eigen::Index r = 0; r < po; ++r) {
      t.Lo.row(r) = s.loadings.row(static_cast<Eigen::Index>(pat.observed[r]));
      so[r] = s.sigma2[static_cast<Eigen::Index>(pat.observed[r])];
    }
    t.scaled = so.cwiseInverse().asDiagonal() * t.Lo;  // po x k
    const Eigen::MatrixXd LtSL = t.Lo.transpose() * t.scaled;
    t.marg_solve.assign(H, {});
    t.prec_chol.assign(H, {});
    std::vector<Eigen::MatrixXd> marg_chol(H);
    std::vector<Eigen::VectorXd> marg_mean(H);
    Eigen::VectorXd log_norm = Eigen::VectorXd::Constant(H, -kInf);
    for (Eigen::Index h = 0; h < H; ++h) {
      if (!(s.weights[h] > 0)) continue;
      Eigen::MatrixXd C = t.Lo * s.covs[h] * t.Lo.transpose();
      C.diagonal() += so;
      auto cl = checked_llt(C, "observed-margin covariance");
      marg_chol[h] = cl.matrixL();
      t.marg_solve[h] = cl.solve(t.Lo);
      marg_mean[h] = t.Lo * s.means[h];
      log_norm[h] = std::log(s.weights[h]) - marg_chol[h].diagonal().array().log().sum();
      auto pl = checked_llt(cov_inv[h] + LtSL, "factor precision");
      t.prec_chol[h] = pl.matrixL();
    }
    Eigen::VectorXd zo(po);
    Eigen::MatrixXd zsum = Eigen::MatrixXd::Zero(po, H);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(H);
    for (auto i : pat.rows) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index r = 0; r < po; ++r) zo[r] = s.latent(ii, static_cast<Eigen::Index>(pat.observed[r]));
      for (Eigen::Index h = 0; h < H; ++h) {
        if (log_norm[h] == -kInf) {
          logp[h] = -kInf;
          continue;
        }
        logp[h] = log_norm[h];
        if (po > 0)
          logp[h] -= 0.5 * marg_chol[h].triangularView<Eigen::Lower>().solve(zo - marg_mean[h]).squaredNorm();
      }
      prob = (logp.array() - logp.maxCoeff()).exp();
      const auto h = static_cast<Eigen::Index>(draw_categorical(rng, prob));
      s.labels[i] = static_cast<int>(h);
      zsum.col(h) += zo;
      count[h] += 1.0;
    }
    for (Eigen::Index h = 0; h < H; ++h) {
      if (count[h] == 0.0) continue;
      info[h] += count[h] * t.Lo.transpose() * t.marg_solve[h];
      shift[h] += t.marg_solve[h].transpose() * zsum.col(h);
    }
  }

  // Component means given the labels and observed cells only.
  for (Eigen::Index h = 0; h < H; ++h) {
    if (!(s.weights[h] > 0)) continue;
    Eigen::MatrixXd P = hyper_.kappa0 * cov_inv[h] + info[h];
    P = 0.5 * (P + P.transpose());
    auto pl = checked_llt(P, "collapsed mean precision");
    Eigen::MatrixXd L = pl.matrixL();
    s.means[h] = draw_mvnormal_canonical(rng, L, hyper_.kappa0 * cov_inv[h] * hyper_.mu0 + shift[h]);
  }

  // Factors, then missing-cell latents.
  for (std::size_t q = 0; q < patterns_.size(); ++q) {
    const auto& pat = patterns_[q];
    const auto& t = terms[q];
    const auto po = static_cast<Eigen::Index>(pat.observed.size());
    Eigen::VectorXd zo(po);
    for (auto i : pat.rows) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto h = static_cast<Eigen::Index>(s.labels[i]);
      for (Eigen::Index r = 0; r < po; ++r) zo[r] = s.latent(ii, static_cast<Eigen::Index>(pat.observed[r]));
      Eigen::VectorXd b = cov_inv[h] * s.means[h] + t.scaled.transpose() * zo;
      s.factors.row(ii) = draw_mvnormal_canonical(rng, t.prec_chol[h], b).transpose();
      for (auto v : pat.missing_vars) {
        if (data_.schema[v].rank_based()) {
          const auto c = static_cast<Eigen::Index>(view_.columns_of[v][0]);
          s.latent(ii, c) = s.factors.row(ii).dot(s.loadings.row(c)) + std::sqrt(s.sigma2[c]) * draw_normal(rng);
        } else {
          sample_orthant_cells(s, v, i, rng);
        }
      }
    }
  }
}

void GibbsSampler::sample_clusters(GmcState& s, Rng& rng) const {
  const auto n = static_cast<Eigen::Index>(s.n());
  const auto H = static_cast<Eigen::Index>(s.H());
  const auto k = static_cast<Eigen::Index>(s.k());

  // Labels.
  std::vector<Eigen::MatrixXd> chol(H);
  Eigen::VectorXd log_norm(H);
  for (Eigen::Index h = 0; h < H; ++h) {
    auto llt = checked_llt(s.covs[h], "component covariance");
    chol[h] = llt.matrixL();
    log_norm[h] = (s.weights[h] > 0 ? std::log(s.weights[h]) : -kInf) -
                  chol[h].diagonal().array().log().sum();
  }
  Eigen::VectorXd logp(H), prob(H);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(H);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd eta = s.factors.row(i).transpose();
    for (Eigen::Index h = 0; h < H; ++h) {
      if (log_norm[h] == -kInf) {
        logp[h] = -kInf;
        continue;
      }
      Eigen::VectorXd r = chol[h].triangularView<Eigen::Lower>().solve(eta - s.means[h]);
      logp[h] = log_norm[h] - 0.5 * r.squaredNorm();
    }
    prob = (logp.array() - logp.maxCoeff()).exp();
    auto c = draw_categorical(rng, prob);
    s.labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
    counts[static_cast<Eigen::Index>(c)] += 1.0;
  }

  // Stick fractions and weights.
  double tail = counts.sum();
  for (Eigen::Index h = 0; h < H; ++h) {
    tail -= counts[h];
    s.stick[h] = h + 1 == H ? 1.0 : draw_beta(rng, 1.0 + counts[h], s.alpha + tail);
  }
  s.weights = stick_break(s.stick);

  // Normal-inverse-Wishart updates.
  const Eigen::MatrixXd psi0 = hyper_.delta * hyper_.delta * Eigen::MatrixXd::Identity(k, k);
  std::vector<Eigen::VectorXd> sum(H, Eigen::VectorXd::Zero(k));
  std::vector<Eigen::MatrixXd> outer(H, Eigen::MatrixXd::Zero(k, k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto h = s.labels[static_cast<std::size_t>(i)];
    Eigen::VectorXd eta = s.factors.row(i).transpose();
    sum[h] += eta;
    outer[h].selfadjointView<Eigen::Lower>().rankUpdate(eta);
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    const double nh = counts[h];
    Eigen::MatrixXd psi = psi0;
    Eigen::VectorXd mu_post = hyper_.mu0;
    if (nh > 0) {
      Eigen::VectorXd bar = sum[h] / nh;
      Eigen::MatrixXd S = outer[h].selfadjointView<Eigen::Lower>();
      S -= nh * bar * bar.transpose();
      Eigen::VectorXd d = hyper_.mu0 - bar;
      psi += S + (hyper_.kappa0 * nh / (hyper_.kappa0 + nh)) * d * d.transpose();
      psi = 0.5 * (psi + psi.transpose());
      mu_post = (hyper_.kappa0 * hyper_.mu0 + nh * bar) / (hyper_.kappa0 + nh);
    }
    const double kappa_post = hyper_.kappa0 + nh;
    s.covs[h] = checked_inverse_wishart(rng, hyper_.nu0 + nh, psi);
    auto llt = checked_llt(s.covs[h] / kappa_post, "component mean covariance");
    s.means[h] = draw_mvnormal_chol(rng, mu_post, llt.matrixL());
  }

  // DP concentration.
  double log_sum = 0.0;
  for (Eigen::Index h = 0; h + 1 < H; ++h)
    log_sum += std::log(std::clamp(s.stick[h], kStickClamp, 1.0 - kStickClamp));
  s.alpha = draw_gamma(rng, hyper_.a_alpha + static_cast<double>(H) - 1.0, hyper_.b_alpha - log_sum);
}

void GibbsSampler::sample_factor_model(GmcState& s, Rng& rng) const {
  const auto n = static_cast<Eigen::Index>(s.n());
  const auto H = static_cast<Eigen::Index>(s.H());
  const auto k = static_cast<Eigen::Index>(s.k());
  const auto p = static_cast<Eigen::Index>(s.p_star());

  // Factors.
  const Eigen::VectorXd inv_sigma2 = s.sigma2.cwiseInverse();
  const Eigen::MatrixXd scaled_loadings = inv_sigma2.asDiagonal() * s.loadings;  // p x k
  const Eigen::MatrixXd LtSL = s.loadings.transpose() * scaled_loadings;
  std::vector<Eigen::MatrixXd> prec_chol(H);
  std::vector<Eigen::VectorXd> prior_term(H);
  for (Eigen::Index h = 0; h < H; ++h) {
    auto dllt = checked_llt(s.covs[h], "component covariance");
    Eigen::MatrixXd dinv = dllt.solve(Eigen::MatrixXd::Identity(k, k));
    prior_term[h] = dinv * s.means[h];
    auto pllt = checked_llt(dinv + LtSL, "factor precision");
    prec_chol[h] = pllt.matrixL();
  }
  if (n > 0) {
    const Eigen::MatrixXd data_term = s.latent * scaled_loadings;  // n x k
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto h = s.labels[static_cast<std::size_t>(i)];
      Eigen::VectorXd b = data_term.row(i).transpose() + prior_term[h];
      s.factors.row(i) = draw_mvnormal_canonical(rng, prec_chol[h], b).transpose();
    }
  }

  // Loadings, row by row.
  const Eigen::MatrixXd EtE = s.factors.transpose() * s.factors;
  const Eigen::MatrixXd EtZ = s.factors.transpose() * s.latent;  // k x p
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd Q = inv_sigma2[j] * EtE;
    Q.diagonal() += (s.local_scales.row(j).transpose().array() * s.global_scales.array()).matrix();
    auto llt = checked_llt(Q, "loading precision");
    Eigen::MatrixXd L = llt.matrixL();
    s.loadings.row(j) = draw_mvnormal_canonical(rng, L, inv_sigma2[j] * EtZ.col(j)).transpose();
  }

  // Idiosyncratic variances.
  const double nd = static_cast<double>(n);
  for (Eigen::Index j = 0; j < p; ++j) {
    double ss = 0.0;
    if (n > 0) ss = (s.latent.col(j) - s.factors * s.loadings.row(j).transpose()).squaredNorm();
    double prec = draw_gamma(rng, hyper_.a_sigma + 0.5 * nd, hyper_.b_sigma + 0.5 * ss);
    s.sigma2[j] = std::max(1.0 / prec, kSigma2Floor);
  }

  // Local shrinkage scales.
  const double nu = hyper_.nu_phi;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index t = 0; t < k; ++t) {
      double lam = s.loadings(j, t);
      s.local_scales(j, t) =
          draw_gamma(rng, 0.5 * (nu + 1.0), 0.5 * (nu + s.global_scales[t] * lam * lam));
    }

  // Multiplicative global increments.
  Eigen::VectorXd col_ss(k);
  for (Eigen::Index t = 0; t < k; ++t)
    col_ss[t] = (s.local_scales.col(t).array() * s.loadings.col(t).array().square()).sum();
  const double pd = static_cast<double>(p);
  for (Eigen::Index h = 0; h < k; ++h) {
    double rate = 1.0;
    double partial = 1.0;  // prod_{t<=l, t != h} delta_t
    for (Eigen::Index l = 0; l < k; ++l) {
      if (l != h) partial *= s.global_increments[l];
      if (l >= h) rate += 0.5 * partial * col_ss[l];
    }
    const double shape = (h == 0 ? hyper_.a1 : hyper_.a2) + 0.5 * pd * static_cast<double>(k - h);
    s.global_increments[h] = draw_gamma(rng, shape, rate);
  }
  double prod = 1.0;
  for (Eigen::Index t = 0; t < k; ++t) {
    prod *= s.global_increments[t];
    s.global_scales[t] = prod;
  }
}

void GibbsSampler::sample_rank_column(GmcState& s, std::size_t c, Rng& rng) const {
  const auto cc = static_cast<Eigen::Index>(c);
  const double var = s.sigma2[cc];
  const double sd = std::sqrt(var);
  const std::size_t n = s.n();
  const auto& rc = rank_[c];
  const Eigen::VectorXd mean = s.factors * s.loadings.row(cc).transpose();
  auto z = s.latent.col(cc);
  if (!resample_[c]) {
    for (std::size_t i = 0; i < n; ++i)
      if (rc.level_of_row[i] < 0) z[i] = mean[i] + sd * draw_normal(rng);
    return;
  }
  const std::size_t L = rc.rows_of_level.size();
  std::vector<double> gmax(L, -kInf), gmin(L, kInf);
  auto refresh = [&](std::size_t l) {
    gmax[l] = -kInf;
    gmin[l] = kInf;
    for (auto r : rc.rows_of_level[l]) {
      gmax[l] = std::max(gmax[l], z[r]);
      gmin[l] = std::min(gmin[l], z[r]);
    }
  };
  for (std::size_t l = 0; l < L; ++l) refresh(l);
  for (std::size_t i = 0; i < n; ++i) {
    const int level = rc.level_of_row[i];
    if (level < 0) {
      z[i] = mean[i] + sd * draw_normal(rng);
      continue;
    }
    const auto l = static_cast<std::size_t>(level);
    TruncationBound b;
    if (l > 0) b.lo = gmax[l - 1];
    if (l + 1 < L) b.hi = gmin[l + 1];
    const double old = z[i];
    const double fresh = sample_truncated_normal(mean[i], var, b, rng);
    z[i] = fresh;
    if (old == gmax[l] || old == gmin[l]) {
      refresh(l);
    } else {
      gmax[l] = std::max(gmax[l], fresh);
      gmin[l] = std::min(gmin[l], fresh);
    }
  }
}

void GibbsSampler::sample_orthant_cells(GmcState& s, std::size_t v, std::size_t i, Rng& rng) const {
  const auto ii = static_cast<Eigen::Index>(i);
  int level = -1;
  if (data_.missing(i, v)) {
    auto probs = level_probabilities(view_, s, v, i);
    level = static_cast<int>(draw_categorical(rng, probs));
  }
  for (auto c : view_.columns_of[v]) {
    const auto cc = static_cast<Eigen::Index>(c);
    int gamma = view_.gamma(ii, cc);
    if (gamma < 0) gamma = view_.columns[c].level == level ? 1 : 0;
    const double mean = s.factors.row(ii).dot(s.loadings.row(cc));
    s.latent(ii, cc) = sample_truncated_normal(mean, s.sigma2[cc], orthant_bounds(gamma), rng);
  }
}

void GibbsSampler::sample_orthant_variable(GmcState& s, std::size_t v, Rng& rng) const {
  for (std::size_t i = 0; i < s.n(); ++i) sample_orthant_cells(s, v, i, rng);
}

void GibbsSampler::sample_latent(GmcState& s, Rng& rng) const {
  for (std::size_t v = 0; v < data_.cols(); ++v) {
    if (data_.schema[v].rank_based()) sample_rank_column(s, view_.columns_of[v][0], rng);
    else sample_orthant_variable(s, v, rng);
  }
}

void GibbsSampler::sweep(GmcState& state, Rng& rng, BlockTimings* timings) const {
  auto t0 = Clock::now();
  if (hyper_.blocked_rows) sample_rows_blocked(state, rng);
  sample_clusters(state, rng);
  if (timings) timings->clusters += seconds_since(t0);
  t0 = Clock::now();
  sample_factor_model(state, rng);
  if (timings) timings->factors += seconds_since(t0);
  t0 = Clock::now();
  sample_latent(state, rng);
  if (timings) timings->latent += seconds_since(t0);
}

GmcState gibbs_sweep(const GmcState& state, const MixedDataset& data, const AugmentedView& view,
                     const Hyperparams& hyper, Rng& rng) {
  GibbsSampler sampler(data, view, hyper);
  GmcState next = state;
  sampler.sweep(next, rng);
  return next;
}

ChainResult run_chain(const MixedDataset& data, const AugmentedView& view,
                      const ChainConfig& config, const DrawCallback& on_draw) {
  config.validate(view.p_star());
  ChainResult result;
  Rng rng = make_rng(config.seed, 0);
  GibbsSampler sampler(data, view, config.hyper);
  GmcState state = init_state(data, view, config.hyper, rng);
  const std::size_t occupied_limit = static_cast<std::size_t>(config.hyper.H) / 2;
  bool warned = false;
  for (int t = 1; t <= config.n_iter; ++t) {
    try {
      sampler.sweep(state, rng, &result.timings);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(t) + ": " + e.what());
    }
    if (t <= config.burn_in || (t - config.burn_in) % config.thin != 0) continue;
    const std::size_t occupied = state.occupied_clusters();
    result.max_occupied = std::max(result.max_occupied, occupied);
    if (occupied > occupied_limit && !warned) {
      warned = true;
      result.warnings.push_back("iteration " + std::to_string(t) + ": " +
                                std::to_string(occupied) + " of H=" +
                                std::to_string(config.hyper.H) +
                                " clusters occupied; consider a larger H");
    }
    auto t0 = Clock::now();
    Draw draw{t, state, margin_adjust_all(data, view, state)};
    result.timings.margins += seconds_since(t0);
    if (on_draw) on_draw(draw);
    result.draws.push_back(std::move(draw));
  }
  return result;
}

nlohmann::json draw_to_json(const Draw& draw) {
  nlohmann::json margins = nlohmann::json::array();
  for (const auto& m : draw.margins) margins.push_back(m ? m->to_json() : nlohmann::json(nullptr));
  return {{"iteration", draw.iteration}, {"state", state_to_json(draw.state)}, {"margins", margins}};
}

Draw draw_from_json(const nlohmann::json& j) {
  Draw d;
  try {
    d.iteration = j.at("iteration").get<int>();
    d.state = state_from_json(j.at("state"));
    for (const auto& m : j.at("margins")) {
      if (m.is_null()) d.margins.emplace_back(std::nullopt);
      else d.margins.emplace_back(MarginEstimate::from_json(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed draw record: ") + e.what());
  }
  return d;
}

}  // namespace gmc
