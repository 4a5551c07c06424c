#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace gmc {

using Rng = std::mt19937_64;

// Independent stream for (master seed, stream index); splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
Rng make_rng(std::uint64_t master, std::uint64_t stream = 0);

double draw_uniform(Rng& rng);  // in (0, 1)
double draw_normal(Rng& rng);
// Gamma with shape/rate parameterisation.
double draw_gamma(Rng& rng, double shape, double rate);
double draw_beta(Rng& rng, double a, double b);
std::size_t draw_categorical(Rng& rng, const Eigen::VectorXd& weights);

// x ~ N(mean, L L') given the lower Cholesky factor L.
Eigen::VectorXd draw_mvnormal_chol(Rng& rng, const Eigen::VectorXd& mean,
                                   const Eigen::MatrixXd& chol_lower);
// x ~ N(P^{-1} b, P^{-1}) given the lower Cholesky factor of the precision P.
Eigen::VectorXd draw_mvnormal_canonical(Rng& rng, const Eigen::MatrixXd& prec_chol_lower,
                                        const Eigen::VectorXd& b);
// Inverse-Wishart(dof, scale) via the Bartlett decomposition of its inverse.
Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double dof, const Eigen::MatrixXd& scale);

}  // namespace gmc
