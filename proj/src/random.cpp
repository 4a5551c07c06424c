#include "gmc/random.hpp"

#include <cmath>

#include "gmc/errors.hpp"

namespace gmc {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(derive_seed(master, stream));
}

double draw_uniform(Rng& rng) {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double draw_normal(Rng& rng) {
  // Marsaglia polar method; avoids implementation-defined std distributions.
  double u, v, s;
  do {
    u = 2.0 * draw_uniform(rng) - 1.0;
    v = 2.0 * draw_uniform(rng) - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

double draw_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0) || !(rate > 0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw DomainError("gamma draw needs positive finite shape and rate");
  if (shape < 1.0) {
    // Boost to shape + 1 and scale back by U^{1/shape}.
    double u = draw_uniform(rng);
    return draw_gamma(rng, shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = draw_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = draw_uniform(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double draw_beta(Rng& rng, double a, double b) {
  double x = draw_gamma(rng, a, 1.0);
  double y = draw_gamma(rng, b, 1.0);
  return x / (x + y);
}

std::size_t draw_categorical(Rng& rng, const Eigen::VectorXd& weights) {
  double total = weights.sum();
  if (!(total > 0) || !std::isfinite(total))
    throw NumericError("categorical draw with non-positive total weight");
  double u = draw_uniform(rng) * total;
  double acc = 0.0;
  for (Eigen::Index h = 0; h < weights.size(); ++h) {
    acc += weights[h];
    if (u < acc) return static_cast<std::size_t>(h);
  }
  for (Eigen::Index h = weights.size() - 1; h >= 0; --h)
    if (weights[h] > 0) return static_cast<std::size_t>(h);
  return 0;
}

Eigen::VectorXd draw_mvnormal_chol(Rng& rng, const Eigen::VectorXd& mean,
                                   const Eigen::MatrixXd& chol_lower) {
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index t = 0; t < e.size(); ++t) e[t] = draw_normal(rng);
  return mean + chol_lower.triangularView<Eigen::Lower>() * e;
}

Eigen::VectorXd draw_mvnormal_canonical(Rng& rng, const Eigen::MatrixXd& prec_chol_lower,
                                        const Eigen::VectorXd& b) {
  const auto L = prec_chol_lower.triangularView<Eigen::Lower>();
  Eigen::VectorXd mean = L.solve(b);
  mean = L.transpose().solve(mean);
  Eigen::VectorXd e(b.size());
  for (Eigen::Index t = 0; t < e.size(); ++t) e[t] = draw_normal(rng);
  return mean + L.transpose().solve(e);
}

Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double dof, const Eigen::MatrixXd& scale) {
  const Eigen::Index k = scale.rows();
  if (!(dof > static_cast<double>(k) - 1))
    throw DomainError("inverse-Wishart dof must exceed dimension - 1");
  // W = Delta^{-1} ~ Wishart(dof, scale^{-1}); scale^{-1} = (L L')^{-1}.
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw NumericError("inverse-Wishart scale is not SPD");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    A(r, r) = std::sqrt(2.0 * draw_gamma(rng, 0.5 * (dof - static_cast<double>(r)), 1.0));
    for (Eigen::Index c = 0; c < r; ++c) A(r, c) = draw_normal(rng);
  }
  // W = L^{-T} A A' L^{-1}; Delta = L A^{-T} A^{-1} L'.
  Eigen::MatrixXd Ainv = A.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd M = llt.matrixL() * Ainv.transpose();
  Eigen::MatrixXd out = M * M.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace gmc
