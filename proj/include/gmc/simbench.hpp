#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmc/analysis.hpp"
#include "gmc/dataset.hpp"
#include "gmc/imputation.hpp"
#include "gmc/sampler.hpp"

namespace gmc {

struct SimPair {
  MixedDataset full;
  MixedDataset masked;
};

// ---- study 1: nonlinear mixed data with MAR driven by |Y1| ----

struct Study1Config {
  std::size_t n = 2000;
  double beta = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

Schema study1_schema();
SimPair gen_study1(const Study1Config& cfg);

/// P(latent column > 0) under the state's mixture: 1 - sum_h pi_h Phi(0; m_h, s_h^2).
double positive_probability(const GmcState& state, std::size_t latent_col);

struct CurvePoint {
  double x = 0.0;
  double true_ecdf = 0.0;
  double observed_ecdf = 0.0;
  double ma_mean = 0.0;
  double ma_lo = 0.0, ma_hi = 0.0;  // pointwise 2.5% / 97.5%
};

struct Study1Report {
  std::size_t n = 0;
  double beta = 0.0;
  std::vector<CurvePoint> y2_curve;  // at observed values of Y2
  double sup_ma = 0.0;               // sup |ma_mean - true_ecdf|
  double sup_observed = 0.0;         // sup |observed_ecdf - true_ecdf|
  std::vector<double> p3_draws;      // posterior of P(Y3 = 1)
  double p3_mean = 0.0, p3_lo = 0.0, p3_hi = 0.0;
  double p3_observed = 0.0;
  double p3_true_sample = 0.0;       // proportion in the pre-masking data
};

Study1Report study1_margin_report(const SimPair& pair, const AugmentedView& view,
                                  const std::vector<Draw>& draws, double beta);
std::string study1_curve_csv(const Study1Report& r);

// ---- study 2: regression with MAR covariates and response ----

inline constexpr std::array<const char*, 7> kStudy2Coefficients = {
    "Intercept", "Middle", "High", "Age", "BMI", "Middle:BMI", "High:BMI"};

struct Study2Config {
  std::optional<std::string> base_csv;  // FI / Age / BMI; synthetic when empty
  Eigen::VectorXd beta_true = (Eigen::VectorXd(7) << 1, 1, 2, 0.5, -2, 2, 4).finished();
  double snr = 1.0;
  std::size_t m = 20;
  std::size_t replicates = 100;
  std::size_t protected_rows = 300;
  std::size_t synthetic_n = 2434;
  std::uint64_t seed = 1;

  void validate() const;
};

Schema study2_schema();
/// Synthetic FI / Age / BMI base covariates (no New column).
MixedDataset synthetic_study2_base(std::size_t n, std::uint64_t seed);
/// Loads FI / Age / BMI from a CSV; rows with any of them missing are dropped.
MixedDataset load_study2_base(const std::string& path);

/// Design matrix with Age / BMI standardized over the rows of `data`.
/// All design columns must be observed.
Eigen::MatrixXd study2_design(const MixedDataset& data);

SimPair gen_study2_replicate(const MixedDataset& base, const Study2Config& cfg, std::size_t r);
std::vector<SimPair> gen_study2(const Study2Config& cfg);

enum class Method { gmc_ma, gmc_ecdf, complete_case };
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct ReplicateFit {
  std::size_t replicate = 0;
  Method method = Method::complete_case;
  bool ok = false;
  std::string failure;
  Eigen::VectorXd estimate, lo, hi;
};

struct BenchmarkConfig {
  std::vector<Method> methods{Method::gmc_ma, Method::gmc_ecdf, Method::complete_case};
  ChainConfig chain;     // thin is derived from m
  std::size_t m = 20;
  double confidence = 0.99;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
};

struct MetricRow {
  Method method = Method::complete_case;
  std::string coefficient;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double abs_bias = 0.0;  // mean over replicates of |estimate - truth|
  double coverage = 0.0;
  double width = 0.0;
  std::size_t replicates = 0;
  std::size_t failures = 0;
};

/// Per-replicate fits for every requested method. GMC methods share one chain
/// per replicate; replicates run in parallel.
std::vector<ReplicateFit> fit_replicates(const std::vector<SimPair>& reps,
                                         const BenchmarkConfig& cfg);
std::vector<MetricRow> summarize_fits(const std::vector<ReplicateFit>& fits,
                                      const Eigen::VectorXd& beta_true);
std::vector<MetricRow> run_benchmark(const std::vector<SimPair>& reps, const Eigen::VectorXd& beta_true,
                                     const BenchmarkConfig& cfg);
std::string metrics_csv(const std::vector<MetricRow>& rows);

/// Complete-case OLS with a t interval; nullopt when too few complete rows.
std::optional<ReplicateFit> complete_case_fit(const MixedDataset& masked, double confidence);
/// OLS on each completed dataset pooled with Rubin's rules.
ReplicateFit pooled_fit(const std::vector<CompletedDataset>& completed, double confidence);

}  // namespace gmc
