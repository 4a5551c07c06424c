#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "gmc/dataset.hpp"
#include "gmc/model.hpp"
#include "gmc/random.hpp"
#include "gmc/sampler.hpp"

namespace gmc::test {

inline ColumnSpec column(std::string name, Kind kind, std::vector<std::string> levels = {}) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = kind;
  c.levels = std::move(levels);
  return c;
}

// State whose latent columns are the factors themselves (Lambda = I) so the
// component marginals are N(means[h][j], sds[h][j]^2) exactly.
inline GmcState diagonal_state(const Eigen::VectorXd& weights,
                               const std::vector<Eigen::VectorXd>& means,
                               const std::vector<Eigen::VectorXd>& sds, std::size_t n = 0,
                               double sigma2 = 1e-6) {
  const auto H = weights.size();
  const auto p = means.front().size();
  GmcState s;
  s.loadings = Eigen::MatrixXd::Identity(p, p);
  s.sigma2 = Eigen::VectorXd::Constant(p, sigma2);
  s.weights = weights;
  s.stick = Eigen::VectorXd::Ones(H);
  double rest = 1.0;
  for (Eigen::Index h = 0; h + 1 < H; ++h) {
    s.stick[h] = rest > 0 ? weights[h] / rest : 0.0;
    rest -= weights[h];
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    s.means.push_back(means[static_cast<std::size_t>(h)]);
    Eigen::VectorXd var = sds[static_cast<std::size_t>(h)].array().square() - sigma2;
    s.covs.push_back(var.asDiagonal());
  }
  s.labels.assign(n, 0);
  s.factors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), p);
  s.latent = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), p);
  s.local_scales = Eigen::MatrixXd::Ones(p, p);
  s.global_increments = Eigen::VectorXd::Ones(p);
  s.global_scales = Eigen::VectorXd::Ones(p);
  return s;
}

inline GmcState standard_state(std::size_t p = 1, std::size_t n = 0) {
  return diagonal_state(Eigen::VectorXd::Ones(1), {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p))},
                        {Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p))}, n);
}

// Continuous, count, ordinal and 3-level categorical columns with a shared
// latent driver; `missing_rate` of cells (except column 0) masked at random.
inline MixedDataset mixed_toy(std::size_t n, double missing_rate, std::uint64_t seed) {
  Schema schema{column("x", Kind::continuous), column("c", Kind::count),
                column("o", Kind::ordinal, {"low", "mid", "high", "top"}),
                column("g", Kind::categorical, {"A", "B", "C"})};
  MixedDataset d = make_dataset(schema, n);
  Rng rng = make_rng(seed, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = draw_normal(rng);
    d.cells(i, 0) = f + 0.5 * draw_normal(rng);
    d.cells(i, 1) = std::floor(std::exp(0.5 * f + 0.7 * draw_normal(rng)) * 2.0);
    d.cells(i, 2) = std::clamp(std::floor(1.5 + f + 0.8 * draw_normal(rng)), 0.0, 3.0);
    const double g = f + 0.8 * draw_normal(rng);
    d.cells(i, 3) = g < -0.5 ? 0.0 : (g < 0.5 ? 1.0 : 2.0);
    d.missing.row(static_cast<Eigen::Index>(i)).setConstant(false);
  }
  Rng mask = make_rng(seed, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j < 4; ++j)
      if (draw_uniform(mask) < missing_rate) {
        d.cells(i, j) = std::nan("");
        d.missing(i, j) = true;
      }
  return d;
}

// Exhaustive check of the rank and orthant events for every observed cell.
// Returns the number of violated observed pairs / cells.
inline std::size_t constraint_violations(const MixedDataset& data, const AugmentedView& view,
                                         const Eigen::MatrixXd& Z, const GibbsSampler* sampler = nullptr) {
  std::size_t bad = 0;
  const std::size_t n = data.rows();
  for (std::size_t v = 0; v < data.cols(); ++v) {
    const auto& cols = view.columns_of[v];
    if (data.schema[v].rank_based()) {
      const auto c = static_cast<Eigen::Index>(cols[0]);
      if (sampler && !sampler->resampled(cols[0])) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (data.missing(i, v)) continue;
        for (std::size_t k = 0; k < n; ++k) {
          if (data.missing(k, v)) continue;
          if (data.cells(i, v) < data.cells(k, v) &&
              !(Z(static_cast<Eigen::Index>(i), c) < Z(static_cast<Eigen::Index>(k), c)))
            ++bad;
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (data.missing(i, v)) continue;
        const int level = static_cast<int>(data.cells(i, v));
        for (auto c : cols) {
          const double z = Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
          const bool positive_expected = view.columns[c].level == level;
          if (positive_expected ? !(z > 0) : !(z < 0)) ++bad;
        }
      }
    }
  }
  return bad;
}

}  // namespace gmc::test
