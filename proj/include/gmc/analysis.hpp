#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmc/dataset.hpp"

namespace gmc {

/// Multiple-imputation pooled estimate for one scalar quantity.
struct PooledEstimate {
  double point = 0.0;
  double within_var = 0.0;   // mean of the per-imputation variances
  double between_var = 0.0;  // sample variance of the estimates
  double total_var = 0.0;    // within + (1 + 1/m) between
  double df = 0.0;           // +inf when between_var == 0
  double lo = 0.0, hi = 0.0;
};

PooledEstimate rubin_combine(std::span<const double> estimates, std::span<const double> variances,
                             double confidence);

struct OlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  double sigma2 = 0.0;
  double df = 0.0;

  // Two-sided t interval for coefficient t.
  std::pair<double, double> interval(Eigen::Index t, double confidence) const;
};

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Student t / normal quantile used by interval construction.
double t_quantile(double p, double df);

/// Type-1 (inverse ECDF) sample quantile.
double sample_quantile_type1(std::vector<double> values, double q);

/// Shortest interval containing `mass` of the samples.
std::pair<double, double> hpd_interval(std::vector<double> samples, double mass = 0.95);

struct QuantileSummaryRow {
  std::string stratum;
  double q = 0.0;
  std::size_t datasets = 0;  // datasets in which the stratum was non-empty
  double median = 0.0;
  double hpd_lo = 0.0, hpd_hi = 0.0;
};

/// Per-stratum quantiles of `target` across predictive datasets, summarised by
/// their median and 95% HPD interval. Strata absent from every dataset are
/// reported with datasets = 0.
std::vector<QuantileSummaryRow> stratified_quantile_summary(
    std::span<const MixedDataset> datasets, const std::vector<std::string>& strata_vars,
    const std::string& target, const std::vector<double>& q);

std::string quantile_summary_to_csv(const std::vector<QuantileSummaryRow>& rows);

}  // namespace gmc
