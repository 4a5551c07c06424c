#pragma once

#include <span>
#include <vector>

namespace gmc {

/// Piecewise-cubic Hermite interpolant through nondecreasing data with
/// Fritsch-Carlson slope limiting, so the curve is monotone and passes
/// through every knot exactly. Constant extrapolation outside the knots.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  // x strictly increasing, y nondecreasing, at least one knot.
  MonotoneCubic(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  // Smallest x in [x_front, x_back] with f(x) >= y (x_front if y <= y_front,
  // x_back if y > y_back).
  double inverse(double y) const;

  std::span<const double> xs() const { return x_; }
  std::span<const double> ys() const { return y_; }
  std::span<const double> slopes() const { return m_; }
  bool empty() const { return x_.empty(); }

 private:
  double eval_segment(std::size_t k, double x) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;
};

}  // namespace gmc
