#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <json.hpp>

#include "gmc/dataset.hpp"
#include "gmc/margins.hpp"
#include "gmc/model.hpp"
#include "gmc/random.hpp"

namespace gmc {

struct TruncationBound {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct ChainConfig {
  int n_iter = 10000;
  int burn_in = 5000;
  int thin = 250;
  std::uint64_t seed = 1;
  Hyperparams hyper;

  void validate(std::size_t p_star) const;
  std::size_t retained_count() const;
};

/// Bounds for observed cell i of a rank column from the other observed rows:
/// lo = max{z_k : y_k < y_i}, hi = min{z_k : y_k > y_i}; ties impose nothing.
/// Missing entries of y are NaN and never constrain.
TruncationBound rank_bounds(std::size_t i, const Eigen::VectorXd& z, const Eigen::VectorXd& y);
TruncationBound rank_bounds(std::size_t i, std::size_t latent_col, const Eigen::MatrixXd& latent,
                            const MixedDataset& data, const AugmentedView& view);

/// gamma = 1 -> (0, inf); gamma = 0 -> (-inf, 0).
TruncationBound orthant_bounds(int gamma);

/// Draw from N(mean, variance) restricted to (b.lo, b.hi).
double sample_truncated_normal(double mean, double variance, const TruncationBound& b, Rng& rng);

/// Pseudo-data initialisation of the latent matrix.
Eigen::MatrixXd init_latent(const MixedDataset& data, const AugmentedView& view,
                            const Hyperparams& hyper, Rng& rng);
Eigen::MatrixXd init_latent(const MixedDataset& data, const AugmentedView& view, Rng& rng);

/// Starting state: PCA factors of the initial latents, k-means clusters.
GmcState init_state(const MixedDataset& data, const AugmentedView& view,
                    const Hyperparams& hyper, Rng& rng);

/// Predictive probabilities of each level of orthant-coded `variable` for
/// row i given the state's factors (binary: {P(level 0), P(level 1)}).
Eigen::VectorXd level_probabilities(const AugmentedView& view, const GmcState& state,
                                    std::size_t variable, std::size_t row);

struct BlockTimings {
  double clusters = 0.0;
  double factors = 0.0;
  double latent = 0.0;
  double margins = 0.0;
};

/// Precomputed per-column rank structure and the sweep kernel.
class GibbsSampler {
 public:
  GibbsSampler(const MixedDataset& data, const AugmentedView& view, Hyperparams hyper);

  void sweep(GmcState& state, Rng& rng, BlockTimings* timings = nullptr) const;
  bool resampled(std::size_t latent_col) const { return resample_[latent_col]; }

  /// Given only the observed latents: labels with factors integrated out,
  /// component means with factors integrated out, then per row the factors
  /// and the latents of missing cells.
  void sample_rows_blocked(GmcState& state, Rng& rng) const;
  void sample_clusters(GmcState& state, Rng& rng) const;
  void sample_factor_model(GmcState& state, Rng& rng) const;
  void sample_latent(GmcState& state, Rng& rng) const;

 private:
  struct RankColumn {
    std::vector<int> level_of_row;  // -1 when missing
    std::vector<std::vector<std::size_t>> rows_of_level;
  };

  void sample_rank_column(GmcState& state, std::size_t col, Rng& rng) const;
  void sample_orthant_variable(GmcState& state, std::size_t variable, Rng& rng) const;
  void sample_orthant_cells(GmcState& state, std::size_t variable, std::size_t row, Rng& rng) const;

  const MixedDataset& data_;
  const AugmentedView& view_;
  Hyperparams hyper_;
  std::vector<bool> resample_;
  std::vector<RankColumn> rank_;  // indexed by latent column (empty for orthant)
  struct Pattern {
    std::vector<std::size_t> observed;   // latent columns
    std::vector<std::size_t> missing_vars;
    std::vector<std::size_t> rows;
  };
  std::vector<Pattern> patterns_;
};

GmcState gibbs_sweep(const GmcState& state, const MixedDataset& data, const AugmentedView& view,
                     const Hyperparams& hyper, Rng& rng);

struct Draw {
  int iteration = 0;
  GmcState state;
  MarginSet margins;
};

struct ChainResult {
  std::vector<Draw> draws;
  BlockTimings timings;
  std::size_t max_occupied = 0;
  std::vector<std::string> warnings;
};

using DrawCallback = std::function<void(const Draw&)>;

ChainResult run_chain(const MixedDataset& data, const AugmentedView& view,
                      const ChainConfig& config, const DrawCallback& on_draw = {});

nlohmann::json draw_to_json(const Draw& draw);
Draw draw_from_json(const nlohmann::json& j);

}  // namespace gmc
