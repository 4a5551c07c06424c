#pragma once

#include <cstdint>
#include <vector>

#include "gmc/dataset.hpp"
#include "gmc/margins.hpp"
#include "gmc/model.hpp"
#include "gmc/random.hpp"
#include "gmc/sampler.hpp"

namespace gmc {

/// y = F_j^{-1}(psi_j(z)) for a latent value z of rank column `latent_col`.
double impute_numeric(std::size_t latent_col, double z, const ComponentMarginals& marginals,
                      const MarginEstimate& margin);
/// Imputes cell (row, variable) from the state's latent value.
double impute_numeric(const AugmentedView& view, std::size_t variable, std::size_t row,
                      const GmcState& state, const MarginEstimate& margin);

struct CategoricalImputation {
  int level = 0;
  Eigen::VectorXd probabilities;
};

CategoricalImputation impute_categorical(const AugmentedView& view, const GmcState& state,
                                         std::size_t variable, std::size_t row, Rng& rng);

struct CompletedDataset {
  MixedDataset data;
  int draw_iteration = 0;
  std::uint64_t seed = 0;
};

/// One completed dataset per draw. With MarginKind::ecdf the margins are the
/// observed-data ECDFs instead of each draw's margin adjustment.
std::vector<CompletedDataset> multiple_impute(const std::vector<Draw>& draws,
                                              const MixedDataset& data,
                                              const AugmentedView& view, std::uint64_t seed,
                                              MarginKind kind = MarginKind::margin_adjust);

/// `count` fresh datasets of n_new rows, cycling through the draws.
std::vector<MixedDataset> posterior_predictive(const std::vector<Draw>& draws,
                                               const MixedDataset& data,
                                               const AugmentedView& view, std::size_t n_new,
                                               std::size_t count, std::uint64_t seed,
                                               MarginKind kind = MarginKind::margin_adjust);

}  // namespace gmc
