#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gmc/dataset.hpp"
#include "gmc/model.hpp"
#include "gmc/monotone_cubic.hpp"

namespace gmc {

enum class MarginKind { margin_adjust, ecdf };

std::string_view to_string(MarginKind kind);
MarginKind margin_kind_from_string(std::string_view s);

/// Monotone CDF estimate for one numeric variable: knots at the unique
/// observed values, anchored at (support_lo, 0) and (support_hi, 1).
class MarginEstimate {
 public:
  MarginEstimate() = default;
  MarginEstimate(std::string variable, Kind variable_kind, MarginKind kind,
                 std::vector<double> x, std::vector<double> u, double support_lo,
                 double support_hi, std::optional<double> clamp_lo = std::nullopt,
                 std::optional<double> clamp_hi = std::nullopt);

  const std::string& variable() const { return variable_; }
  Kind variable_kind() const { return variable_kind_; }
  MarginKind kind() const { return kind_; }
  const std::vector<double>& knot_x() const { return x_; }
  const std::vector<double>& knot_u() const { return u_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  const MonotoneCubic& interpolant() const { return curve_; }

  double cdf(double x) const { return curve_(x); }
  // Generalised inverse; count and ordinal results round up to the support grid.
  double inverse(double u) const;

  nlohmann::json to_json() const;
  static MarginEstimate from_json(const nlohmann::json& j);

 private:
  std::string variable_;
  Kind variable_kind_ = Kind::continuous;
  MarginKind kind_ = MarginKind::margin_adjust;
  std::vector<double> x_, u_;
  double lo_ = 0.0, hi_ = 1.0;
  std::optional<double> clamp_lo_, clamp_hi_;
  MonotoneCubic curve_;
};

/// (x, Z_j^n(x)) for every unique observed x, ascending; the latent is the
/// running max of latents over observed rows with y <= x.
std::vector<std::pair<double, double>> margin_knot_latents(const MixedDataset& data,
                                                           std::size_t variable,
                                                           const Eigen::VectorXd& latent_column);
/// Z_j^n at an arbitrary x, falling back to the latents at the observed minimum.
double margin_knot_latent_at(const MixedDataset& data, std::size_t variable,
                             const Eigen::VectorXd& latent_column, double x);

/// Interpolation anchors (lo, hi) for a numeric variable per its schema and data.
std::pair<double, double> support_anchors(const MixedDataset& data, std::size_t variable);

MarginEstimate margin_adjust(const MixedDataset& data, const AugmentedView& view,
                             std::size_t variable, const GmcState& state,
                             const ComponentMarginals& marginals);
MarginEstimate margin_adjust(const MixedDataset& data, const AugmentedView& view,
                             std::size_t variable, const GmcState& state);
MarginEstimate ecdf(const MixedDataset& data, std::size_t variable);

double margin_inverse(const MarginEstimate& est, double u);

/// One entry per variable; empty for orthant-coded variables.
using MarginSet = std::vector<std::optional<MarginEstimate>>;

MarginSet margin_adjust_all(const MixedDataset& data, const AugmentedView& view,
                            const GmcState& state);
MarginSet ecdf_all(const MixedDataset& data);

}  // namespace gmc
