#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace gmc {

/// Prior hyperparameters of the mixture-of-factor-models copula.
struct Hyperparams {
  int H = 20;                   // DP truncation level
  int k = 1;                    // latent factor dimension
  double delta = 10.0;          // NIW scale: Psi0 = delta^2 I_k
  double kappa0 = 0.001;
  double nu0 = 3.0;
  Eigen::VectorXd mu0;          // k-vector, zero by default
  double a_alpha = 1.0, b_alpha = 1.0;
  double a_sigma = 1.0, b_sigma = 1.0;
  double a1 = 2.0, a2 = 3.0, nu_phi = 3.0;
  int resample_threshold = 350;
  // Per-row draw of (label, factors, missing-cell latents) from the observed
  // latents alone, ahead of the standard blocks.
  bool blocked_rows = true;

  void validate(std::size_t p_star) const;
};

Hyperparams default_hyperparams(std::size_t p_star);

nlohmann::json hyperparams_to_json(const Hyperparams& h);
// Overlays keys present in `j` onto `base`.
Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams base);

/// One posterior draw of every sampled quantity.
struct GmcState {
  Eigen::MatrixXd loadings;          // p* x k
  Eigen::VectorXd sigma2;            // p* idiosyncratic variances
  Eigen::VectorXd stick;             // H stick fractions, stick[H-1] = 1
  Eigen::VectorXd weights;           // H mixture weights
  std::vector<Eigen::VectorXd> means;  // H component means (k)
  std::vector<Eigen::MatrixXd> covs;   // H component covariances (k x k)
  std::vector<int> labels;           // n cluster labels, 0-based
  Eigen::MatrixXd factors;           // n x k
  Eigen::MatrixXd latent;            // n x p*
  double alpha = 1.0;                // DP concentration
  Eigen::MatrixXd local_scales;      // p* x k
  Eigen::VectorXd global_increments; // k
  Eigen::VectorXd global_scales;     // k cumulative products

  std::size_t H() const { return static_cast<std::size_t>(weights.size()); }
  std::size_t k() const { return static_cast<std::size_t>(loadings.cols()); }
  std::size_t p_star() const { return static_cast<std::size_t>(loadings.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(latent.rows()); }
  std::size_t occupied_clusters() const;

  // Throws NumericError describing the first broken invariant.
  void check_invariants() const;
};

/// pi_h = V_h prod_{l<h} (1 - V_l). Requires V in [0,1] and V_H = 1.
Eigen::VectorXd stick_break(const Eigen::VectorXd& fractions);

/// Per-component marginal moments of each latent column:
/// mean(h, j) = (Lambda mu_h)_j, sd(h, j)^2 = (Lambda Delta_h Lambda' + Sigma)_jj.
struct ComponentMarginals {
  Eigen::VectorXd weights;
  Eigen::MatrixXd mean;  // H x p*
  Eigen::MatrixXd sd;    // H x p*

  static ComponentMarginals from_state(const GmcState& state);

  double cdf(std::size_t j, double z) const;
  double quantile(std::size_t j, double u) const;
};

/// psi_j(z) = sum_h pi_h Phi((z - m_hj) / s_hj).
double mixture_marginal_cdf(std::size_t j, double z, const GmcState& state);
/// Inverse of psi_j by bracketed bisection.
double mixture_marginal_quantile(std::size_t j, double u, const GmcState& state);

nlohmann::json state_to_json(const GmcState& state);
GmcState state_from_json(const nlohmann::json& j);

}  // namespace gmc
