#include "gmc/monotone_cubic.hpp"

#include <algorithm>
#include <cmath>

#include "gmc/errors.hpp"

namespace gmc {

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n == 0 || y_.size() != n) throw DomainError("monotone cubic needs matching non-empty knots");
  for (std::size_t k = 1; k < n; ++k) {
    if (!(x_[k] > x_[k - 1])) throw DomainError("monotone cubic knots must be strictly increasing");
    if (y_[k] < y_[k - 1]) throw DomainError("monotone cubic values must be nondecreasing");
  }
  m_.assign(n, 0.0);
  if (n == 1) return;

  std::vector<double> d(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) d[k] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);

  m_[0] = d[0];
  m_[n - 1] = d[n - 2];
  for (std::size_t k = 1; k + 1 < n; ++k)
    m_[k] = (d[k - 1] * d[k] <= 0.0) ? 0.0 : 0.5 * (d[k - 1] + d[k]);

  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (d[k] == 0.0) {
      m_[k] = 0.0;
      m_[k + 1] = 0.0;
      continue;
    }
    double a = m_[k] / d[k];
    double b = m_[k + 1] / d[k];
    double r = a * a + b * b;
    if (r > 9.0) {
      double t = 3.0 / std::sqrt(r);
      m_[k] = t * a * d[k];
      m_[k + 1] = t * b * d[k];
    }
  }
}

double MonotoneCubic::eval_segment(std::size_t k, double x) const {
  const double h = x_[k + 1] - x_[k];
  const double t = (x - x_[k]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1;
  const double h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2;
  const double h11 = t3 - t2;
  double v = h00 * y_[k] + h10 * h * m_[k] + h01 * y_[k + 1] + h11 * h * m_[k + 1];
  // Guard rounding so the segment never leaves its knot rectangle.
  return std::clamp(v, y_[k], y_[k + 1]);
}

double MonotoneCubic::operator()(double x) const {
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t k = static_cast<std::size_t>(it - x_.begin()) - 1;
  if (x == x_[k]) return y_[k];
  return eval_segment(k, x);
}

double MonotoneCubic::inverse(double y) const {
  if (y <= y_.front()) return x_.front();
  if (y > y_.back()) return x_.back();
  // First knot with value >= y; the answer lies in (x_{k-1}, x_k].
  auto it = std::lower_bound(y_.begin(), y_.end(), y);
  std::size_t k = static_cast<std::size_t>(it - y_.begin());
  double lo = x_[k - 1];
  double hi = x_[k];
  for (int it_count = 0; it_count < 200; ++it_count) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (eval_segment(k - 1, mid) >= y) hi = mid;
    else lo = mid;
  }
  return hi;
}

}  // namespace gmc
