#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gmc/errors.hpp"
#include "gmc/margins.hpp"
#include "gmc/monotone_cubic.hpp"
#include "gmc/normal.hpp"
#include "helpers.hpp"

using namespace gmc;
using gmc::test::column;

namespace {

MixedDataset one_column(Kind kind, const std::vector<double>& y) {
  MixedDataset d = make_dataset(Schema{column("y", kind)}, y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    d.cells(i, 0) = y[i];
    d.missing(i, 0) = std::isnan(y[i]);
  }
  return d;
}

// Direct reading of the set definition: max latent over observed rows with
// y <= x, together with the rows at the observed minimum.
double knot_oracle(const std::vector<double>& y, const Eigen::VectorXd& z, double x) {
  double ymin = INFINITY;
  for (double v : y)
    if (!std::isnan(v)) ymin = std::min(ymin, v);
  double best = -INFINITY;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!std::isnan(y[i]) && (y[i] <= x || y[i] == ymin)) best = std::max(best, z[static_cast<Eigen::Index>(i)]);
  return best;
}

}  // namespace

TEST_CASE("knot latents are running maxima") {
  std::vector<double> y{1, 2, 2, 5};
  auto d = one_column(Kind::continuous, y);
  Eigen::Vector4d z(-1.2, 0.1, 0.3, 2.0);
  CHECK(margin_knot_latent_at(d, 0, z, 2.0) == 0.3);
  CHECK(margin_knot_latent_at(d, 0, z, 0.0) == -1.2);  // below the minimum
  auto knots = margin_knot_latents(d, 0, z);
  REQUIRE(knots.size() == 3);
  CHECK(knots[1] == std::pair<double, double>{2.0, 0.3});
  CHECK(knots[2].second == 2.0);

  Rng rng = make_rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> yy(12);
    Eigen::VectorXd zz(12);
    for (std::size_t i = 0; i < 12; ++i) {
      yy[i] = std::floor(draw_uniform(rng) * 5);
      if (draw_uniform(rng) < 0.2) yy[i] = std::nan("");
      zz[static_cast<Eigen::Index>(i)] = draw_normal(rng);
    }
    if (std::count_if(yy.begin(), yy.end(), [](double v) { return !std::isnan(v); }) == 0) continue;
    auto dd = one_column(Kind::count, yy);
    for (const auto& [x, zx] : margin_knot_latents(dd, 0, zz)) CHECK(zx == knot_oracle(yy, zz, x));
    for (double x : {-1.0, 0.5, 2.0, 3.7, 9.0}) CHECK(margin_knot_latent_at(dd, 0, zz, x) == knot_oracle(yy, zz, x));
  }
}

TEST_CASE("ecdf uses the n/(n+1) convention") {
  auto d = one_column(Kind::continuous, {3, 1, 2});
  auto e = ecdf(d, 0);
  CHECK(e.kind() == MarginKind::ecdf);
  CHECK(e.cdf(1) == doctest::Approx(0.25));
  CHECK(e.cdf(2) == doctest::Approx(0.5));
  CHECK(e.cdf(3) == doctest::Approx(0.75));
  CHECK(e.cdf(e.support_lo()) == 0.0);
  CHECK(e.cdf(e.support_hi()) == 1.0);
}

TEST_CASE("margin adjustment under a standard state") {
  auto d = one_column(Kind::continuous, {1, 2, 3, 4});
  auto view = expand_rpl(d);
  auto s = test::standard_state(1, 4);
  s.latent.col(0) << -1.0, 0.0, 0.5, 1.0;
  auto m = margin_adjust(d, view, 0, s);
  CHECK(m.cdf(2) == doctest::Approx(0.5));
  CHECK(m.cdf(4) == doctest::Approx(normal_cdf(1.0)));
  for (std::size_t t = 0; t < m.knot_x().size(); ++t) CHECK(m.cdf(m.knot_x()[t]) == m.knot_u()[t]);
  CHECK_THROWS_AS(margin_adjust(make_dataset(Schema{column("g", Kind::categorical, {"a", "b", "c"})}, 2),
                                expand_rpl(make_dataset(Schema{column("g", Kind::categorical, {"a", "b", "c"})}, 2)),
                                0, test::standard_state(3, 2)),
                  DomainError);
}

TEST_CASE("inverse stays in support and rounds counts up") {
  auto d = one_column(Kind::continuous, {1, 2, 3});
  auto e = ecdf(d, 0);
  const double below = margin_inverse(e, 0.01);
  CHECK(below >= e.support_lo());
  CHECK(below <= 1.0);
  for (double u : {1e-15, 0.1, 0.33, 0.5, 0.74, 0.9, 1.0}) {
    const double x = margin_inverse(e, u);
    const double uc = std::clamp(u, 1e-12, 1 - 1e-12);
    CHECK(e.cdf(x) >= uc - 1e-8);
    CHECK(std::abs(e.cdf(x) - uc) < 1e-8);
  }

  MarginEstimate counts("c", Kind::count, MarginKind::ecdf, {0, 4, 5, 9}, {0.1, 0.4, 0.6, 0.9}, -1, 12, 0.0,
                        std::nullopt);
  // u between the knots at 4 and 5 lands strictly inside (4, 5) before rounding
  const double pre = counts.interpolant().inverse(0.5);
  CHECK(pre > 4.0);
  CHECK(pre < 5.0);
  CHECK(margin_inverse(counts, 0.5) == 5.0);
  CHECK(margin_inverse(counts, 0.4) == 4.0);
  for (double u = 0.01; u < 1.0; u += 0.01) {
    const double x = margin_inverse(counts, u);
    CHECK(x == std::floor(x));
    CHECK(x >= 0.0);
  }
}

TEST_CASE("margin estimates round trip through JSON") {
  MarginEstimate m("age", Kind::count, MarginKind::margin_adjust, {18, 19, 40}, {0.2, 0.21, 0.95}, 17, 44, 0.0,
                   std::nullopt);
  auto back = MarginEstimate::from_json(m.to_json());
  CHECK(back.to_json().dump() == m.to_json().dump());
  for (double x = 17; x <= 44; x += 0.37) CHECK(back.cdf(x) == m.cdf(x));
}

TEST_CASE("monotone cubic interpolates and stays monotone") {
  std::vector<double> x{0, 1, 2, 3, 4, 5}, y{0, 0.1, 0.1, 0.6, 0.61, 1.0};
  MonotoneCubic f(x, y);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(f(x[k]) == y[k]);
  double prev = -1;
  for (double t = -1; t <= 6; t += 0.001) {
    double v = f(t);
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
  CHECK(f(1.5) == doctest::Approx(0.1));  // flat segment stays flat
  CHECK(f(-3) == 0.0);
  CHECK(f(9) == 1.0);
  for (double u : {0.05, 0.3, 0.605, 0.9}) CHECK(f(f.inverse(u)) == doctest::Approx(u).epsilon(1e-10));
  // smallest x reaching the level; the curve is flat into x = 1, so only ~sqrt(eps) resolution
  CHECK(std::abs(f.inverse(0.1) - 1.0) < 1e-6);
}

TEST_CASE("count anchors sit below the smallest value") {
  auto d = one_column(Kind::count, {0, 0, 3, 7});
  auto [lo, hi] = support_anchors(d, 0);
  CHECK(lo == -1.0);
  CHECK(hi >= 7.0);
  auto c = one_column(Kind::continuous, {2, 4});
  auto [clo, chi] = support_anchors(c, 0);
  CHECK(clo == doctest::Approx(1.8));
  CHECK(chi == doctest::Approx(4.2));
}
