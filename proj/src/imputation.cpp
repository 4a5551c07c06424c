#include "gmc/imputation.hpp"

#include "gmc/errors.hpp"

namespace gmc {

double impute_numeric(std::size_t latent_col, double z, const ComponentMarginals& marginals,
                      const MarginEstimate& margin) {
  return margin_inverse(margin, marginals.cdf(latent_col, z));
}

double impute_numeric(const AugmentedView& view, std::size_t variable, std::size_t row,
                      const GmcState& state, const MarginEstimate& margin) {
  const std::size_t c = view.columns_of.at(variable).at(0);
  return impute_numeric(c, state.latent(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)),
                        ComponentMarginals::from_state(state), margin);
}

CategoricalImputation impute_categorical(const AugmentedView& view, const GmcState& state,
                                         std::size_t variable, std::size_t row, Rng& rng) {
  CategoricalImputation out;
  out.probabilities = level_probabilities(view, state, variable, row);
  out.level = static_cast<int>(draw_categorical(rng, out.probabilities));
  return out;
}

namespace {

const MarginEstimate& margin_for(const MarginSet& set, std::size_t v) {
  if (v >= set.size() || !set[v]) throw DomainError("no margin estimate for variable " + std::to_string(v));
  return *set[v];
}

}  // namespace

std::vector<CompletedDataset> multiple_impute(const std::vector<Draw>& draws,
                                              const MixedDataset& data,
                                              const AugmentedView& view, std::uint64_t seed,
                                              MarginKind kind) {
  if (draws.empty()) throw ConfigError("multiple imputation needs at least one retained draw");
  MarginSet ecdf_margins;
  if (kind == MarginKind::ecdf) ecdf_margins = ecdf_all(data);
  std::vector<CompletedDataset> out;
  out.reserve(draws.size());
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const auto& draw = draws[d];
    const MarginSet& margins = kind == MarginKind::ecdf ? ecdf_margins : draw.margins;
    const auto marginals = ComponentMarginals::from_state(draw.state);
    Rng rng = make_rng(seed, d);
    CompletedDataset cd{data, draw.iteration, seed};
    for (std::size_t v = 0; v < data.cols(); ++v) {
      const auto& spec = data.schema[v];
      for (std::size_t i = 0; i < data.rows(); ++i) {
        if (!data.missing(i, v)) continue;
        double value;
        if (spec.rank_based()) {
          const std::size_t c = view.columns_of[v][0];
          value = impute_numeric(c, draw.state.latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)),
                                 marginals, margin_for(margins, v));
        } else {
          value = impute_categorical(view, draw.state, v, i, rng).level;
        }
        cd.data.cells(i, v) = value;
        cd.data.missing(i, v) = false;
      }
    }
    out.push_back(std::move(cd));
  }
  return out;
}

std::vector<MixedDataset> posterior_predictive(const std::vector<Draw>& draws,
                                               const MixedDataset& data,
                                               const AugmentedView& view, std::size_t n_new,
                                               std::size_t count, std::uint64_t seed,
                                               MarginKind kind) {
  if (draws.empty()) throw ConfigError("posterior prediction needs at least one retained draw");
  MarginSet ecdf_margins;
  if (kind == MarginKind::ecdf) ecdf_margins = ecdf_all(data);
  std::vector<MixedDataset> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto& draw = draws[r % draws.size()];
    const auto& s = draw.state;
    const MarginSet& margins = kind == MarginKind::ecdf ? ecdf_margins : draw.margins;
    const auto marginals = ComponentMarginals::from_state(s);
    const auto p = static_cast<Eigen::Index>(s.p_star());
    std::vector<Eigen::MatrixXd> chol(s.H());
    for (std::size_t h = 0; h < s.H(); ++h) {
      Eigen::LLT<Eigen::MatrixXd> llt(s.covs[h]);
      if (llt.info() != Eigen::Success) throw NumericError("component covariance is not SPD");
      chol[h] = llt.matrixL();
    }
    const Eigen::VectorXd sd = s.sigma2.cwiseSqrt();
    Rng rng = make_rng(seed, r);
    MixedDataset ds = make_dataset(data.schema, n_new);
    Eigen::VectorXd z(p);
    for (std::size_t i = 0; i < n_new; ++i) {
      const auto h = draw_categorical(rng, s.weights);
      Eigen::VectorXd eta = draw_mvnormal_chol(rng, s.means[h], chol[h]);
      for (Eigen::Index j = 0; j < p; ++j) z[j] = s.loadings.row(j).dot(eta) + sd[j] * draw_normal(rng);
      for (std::size_t v = 0; v < data.cols(); ++v) {
        const auto& cols = view.columns_of[v];
        double value;
        if (data.schema[v].rank_based()) {
          value = impute_numeric(cols[0], z[static_cast<Eigen::Index>(cols[0])], marginals,
                                 margin_for(margins, v));
        } else if (cols.size() == 1) {
          value = z[static_cast<Eigen::Index>(cols[0])] > 0 ? 1.0 : 0.0;
        } else {
          // Orthant decoding; argmax also covers draws with no positive coordinate.
          std::size_t best = 0;
          for (std::size_t m = 1; m < cols.size(); ++m)
            if (z[static_cast<Eigen::Index>(cols[m])] > z[static_cast<Eigen::Index>(cols[best])]) best = m;
          value = view.columns[cols[best]].level;
        }
        ds.cells(i, v) = value;
        ds.missing(i, v) = false;
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace gmc
