#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmc/analysis.hpp"
#include "gmc/errors.hpp"
#include "gmc/normal.hpp"
#include "gmc/random.hpp"
#include "helpers.hpp"

using namespace gmc;
using gmc::test::column;

TEST_CASE("Rubin pooling hand example") {
  std::vector<double> est{1, 2, 3}, var{1, 1, 1};
  auto p = rubin_combine(est, var, 0.95);
  CHECK(p.point == 2.0);
  CHECK(p.within_var == 1.0);
  CHECK(p.between_var == 1.0);
  CHECK(p.total_var == doctest::Approx(1.0 + 4.0 / 3.0).epsilon(1e-15));
  const double r = 1.0 / ((4.0 / 3.0));
  CHECK(p.df == doctest::Approx(2.0 * (1 + r) * (1 + r)));
  CHECK(p.lo < 2.0);
  CHECK(p.hi - 2.0 == doctest::Approx(2.0 - p.lo));
}

TEST_CASE("Rubin pooling with no between variance") {
  std::vector<double> est{0.5, 0.5, 0.5, 0.5}, var{0.04, 0.04, 0.04, 0.04};
  auto p = rubin_combine(est, var, 0.95);
  CHECK(p.between_var == 0.0);
  CHECK(std::isinf(p.df));
  CHECK(p.total_var == doctest::Approx(0.04));
  CHECK(p.hi == doctest::Approx(0.5 + 1.959963985 * 0.2));
  std::vector<double> one{1.0}, v1{1.0};
  CHECK_THROWS_AS(rubin_combine(one, v1, 0.95), ConfigError);
  std::vector<double> two{1.0, 2.0}, zero{1.0, 0.0};
  CHECK_THROWS_AS(rubin_combine(two, zero, 0.95), DomainError);
}

TEST_CASE("t quantiles") {
  CHECK(t_quantile(0.975, 10) == doctest::Approx(2.228138851986274));
  CHECK(t_quantile(0.995, INFINITY) == doctest::Approx(normal_quantile(0.995)));
}

TEST_CASE("OLS recovers a noiseless fit") {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
  Eigen::VectorXd y = X * Eigen::Vector2d(1.5, -0.5);
  auto fit = ols(X, y);
  CHECK(fit.coef[0] == doctest::Approx(1.5));
  CHECK(fit.coef[1] == doctest::Approx(-0.5));
  CHECK(fit.df == 4.0);
  CHECK_THROWS_AS(ols(X.topRows(2), y.head(2)), DegenerateError);
}

TEST_CASE("type-1 sample quantile") {
  std::vector<double> v(31);
  std::iota(v.begin(), v.end(), 0.0);
  CHECK(sample_quantile_type1(v, 0.9) == 27.0);
  CHECK(sample_quantile_type1(v, 0.0) == 0.0);
  CHECK(sample_quantile_type1(v, 1.0) == 30.0);
}

TEST_CASE("HPD matches a shortest-window scan") {
  Rng rng = make_rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s(500);
    for (auto& x : s) x = std::exp(draw_normal(rng));
    auto [lo, hi] = hpd_interval(s, 0.95);
    std::sort(s.begin(), s.end());
    const std::size_t w = static_cast<std::size_t>(std::ceil(0.95 * 500));
    double best = INFINITY;
    for (std::size_t i = 0; i + w <= s.size(); ++i) best = std::min(best, s[i + w - 1] - s[i]);
    CHECK(hi - lo == best);
    const auto inside = std::count_if(s.begin(), s.end(), [&](double x) { return x >= lo && x <= hi; });
    CHECK(static_cast<std::size_t>(inside) >= w);
  }
}

TEST_CASE("stratified quantile summary") {
  Schema schema{column("g", Kind::categorical, {"a", "b", "c"}), column("y", Kind::continuous)};
  std::vector<MixedDataset> sets;
  for (int t = 0; t < 5; ++t) {
    auto d = make_dataset(schema, 31);
    for (std::size_t i = 0; i < 31; ++i) {
      d.cells(i, 0) = i % 2;  // level c never appears
      d.cells(i, 1) = 4.0;
    }
    d.missing.setConstant(false);
    sets.push_back(d);
  }
  auto rows = stratified_quantile_summary(sets, {"g"}, "y", {0.75, 0.9});
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    if (r.stratum == "g=c") {
      CHECK(r.datasets == 0);
      CHECK(std::isnan(r.median));
    } else {
      CHECK(r.datasets == 5);
      CHECK(r.median == 4.0);
      CHECK(r.hpd_hi - r.hpd_lo == 0.0);
    }
  }
  CHECK(quantile_summary_to_csv(rows).find("NA") != std::string::npos);

  for (std::size_t i = 0; i < 31; ++i) sets[0].cells(i, 1) = static_cast<double>(i);
  auto all = stratified_quantile_summary(std::span<const MixedDataset>(sets.data(), 1), {}, "y", {0.9});
  REQUIRE(all.size() == 1);
  CHECK(all[0].stratum == "all");
  CHECK(all[0].median == 27.0);
}
