#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "gmc/dataset.hpp"
#include "gmc/random.hpp"
#include "helpers.hpp"

using namespace gmc;
using gmc::test::column;

namespace {

const char* kSchemaJson = R"({"columns":[
  {"name":"FI","kind":"categorical","levels":["Low","Middle","High"]},
  {"name":"Age","kind":"count"},
  {"name":"BMI","kind":"continuous","support":[10,90]}]})";

template <class E>
std::string error_text(const std::string& csv) {
  try {
    parse_dataset(csv, parse_schema(kSchemaJson));
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("empty and NA cells are missing, others parse") {
  auto d = parse_dataset("FI,Age,BMI\nLow,30,22.5\nHigh,41,\nNA,50,31\n", parse_schema(kSchemaJson));
  CHECK(d.rows() == 3);
  CHECK(d.missing(1, 2));
  CHECK(std::isnan(d.cells(1, 2)));
  CHECK(d.missing(2, 0));
  CHECK_FALSE(d.missing(0, 2));
  CHECK(d.cells(0, 2) == 22.5);
  CHECK(d.cells(1, 0) == 2.0);  // "High" -> level index 2
  CHECK(d.missing_count() == 2);
  CHECK(d.complete_case_count() == 1);
}

TEST_CASE("ingestion errors name the row and column") {
  auto unknown = error_text<SchemaError>("FI,Age,BMI\nLow,30,22\nRich,30,22\n");
  CHECK(unknown.find("Rich") != std::string::npos);
  CHECK(unknown.find("FI") != std::string::npos);
  CHECK(unknown.find("row 2") != std::string::npos);  // data rows, header excluded

  auto bad_number = error_text<ParseError>("FI,Age,BMI\nLow,thirty,22\n");
  CHECK(bad_number.find("Age") != std::string::npos);

  CHECK(error_text<FormatError>("FI,Age,BMI\nLow,30\n") != "<no error>");
  CHECK(error_text<ParseError>("FI,Age,BMI\nLow,na,22\n") != "<no error>");
  CHECK(error_text<DataError>("FI,Age,BMI\nLow,30,95\n") != "<no error>");  // outside support
}

TEST_CASE("quoted fields follow RFC 4180") {
  auto rows = parse_csv("a,b\n\"x, y\",\"say \"\"hi\"\"\"\r\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "x, y");
  CHECK(rows[1][1] == "say \"hi\"");
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(parse_schema(R"({"columns":[{"name":"g","kind":"categorical","levels":["a"]}]})"),
                  SchemaError);
  CHECK_THROWS_AS(parse_schema(R"({"columns":[{"name":"x","kind":"continuous","support":[3,1]}]})"),
                  SchemaError);
  CHECK_THROWS_AS(parse_schema(R"({"columns":[{"name":"x","kind":"weird"}]})"), SchemaError);
  auto s = parse_schema(R"({"columns":[{"name":"c","kind":"count"}]})");
  REQUIRE(s[0].effective_lo());
  CHECK(*s[0].effective_lo() == 0.0);
  CHECK(parse_schema(schema_to_json(parse_schema(kSchemaJson)))[2].support_hi == 90.0);
}

TEST_CASE("write then load reproduces cells and mask bit-exactly") {
  auto d = gmc::test::mixed_toy(200, 0.3, 11);
  Rng rng = make_rng(3);
  for (std::size_t i = 0; i < d.rows(); ++i) d.cells(i, 0) = draw_normal(rng) * 1e3 / 7.0;
  const auto dir = std::filesystem::temp_directory_path() / "gmc_dataset_roundtrip";
  std::filesystem::create_directories(dir);
  write_dataset(d, dir / "d.csv");
  write_schema(d.schema, dir / "s.json");
  auto back = load_dataset(dir / "d.csv", dir / "s.json");
  REQUIRE(back.rows() == d.rows());
  CHECK(back.missing == d.missing);
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (!d.missing(i, j)) CHECK(back.cells(i, j) == d.cells(i, j));
  std::filesystem::remove_all(dir);
}

TEST_CASE("rank-probit expansion") {
  Schema schema{column("u", Kind::continuous), column("v", Kind::continuous),
                column("g", Kind::categorical, {"A", "B", "C"}),
                column("yes", Kind::categorical, {"No", "Yes"})};
  auto d = parse_dataset("u,v,g,yes\n1,2,B,Yes\n3,4,,No\n5,6,A,\n", schema);
  auto view = expand_rpl(d);
  CHECK(view.p_star() == 6);  // 2 numeric + 3 levels + 1 binary
  const auto& g = view.columns_of[2];
  REQUIRE(g.size() == 3);
  CHECK(view.gamma(0, static_cast<Eigen::Index>(g[0])) == 0);
  CHECK(view.gamma(0, static_cast<Eigen::Index>(g[1])) == 1);
  CHECK(view.gamma(0, static_cast<Eigen::Index>(g[2])) == 0);
  for (auto c : g) CHECK(view.gamma(1, static_cast<Eigen::Index>(c)) == -1);
  const auto b = view.columns_of[3];
  REQUIRE(b.size() == 1);
  CHECK(view.columns[b[0]].role == LatentRole::binary);
  CHECK(view.columns[b[0]].level == 1);
  CHECK(view.gamma(0, static_cast<Eigen::Index>(b[0])) == 1);
  CHECK(view.gamma(1, static_cast<Eigen::Index>(b[0])) == 0);
  CHECK(view.gamma(2, static_cast<Eigen::Index>(b[0])) == -1);

  Schema small{column("a", Kind::continuous), column("b", Kind::continuous),
               column("g", Kind::categorical, {"x", "y", "z"})};
  CHECK(expand_rpl(make_dataset(small, 4)).p_star() == 5);
}

TEST_CASE("orthant ordinals and observed indicator sums") {
  auto d = gmc::test::mixed_toy(60, 0.2, 5);
  d.schema[2] = column("o", Kind::ordinal, {"low", "mid", "high", "top"});
  d.schema[2].as_orthant = true;
  auto view = expand_rpl(d);
  CHECK(view.columns_of[2].size() == 4);
  for (std::size_t v : {std::size_t{2}, std::size_t{3}})
    for (std::size_t i = 0; i < d.rows(); ++i) {
      int sum = 0, unset = 0;
      for (auto c : view.columns_of[v]) {
        int g = view.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        if (g < 0) ++unset;
        else sum += g;
      }
      if (d.missing(i, v)) CHECK(unset == static_cast<int>(view.columns_of[v].size()));
      else CHECK(sum == 1);
    }
}

TEST_CASE("expansion does not depend on row order") {
  auto d = gmc::test::mixed_toy(40, 0.25, 9);
  std::vector<Eigen::Index> perm(d.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  MixedDataset r = d;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    r.cells.row(static_cast<Eigen::Index>(i)) = d.cells.row(perm[i]);
    r.missing.row(static_cast<Eigen::Index>(i)) = d.missing.row(perm[i]);
  }
  auto a = expand_rpl(d), b = expand_rpl(r);
  REQUIRE(a.p_star() == b.p_star());
  for (std::size_t i = 0; i < d.rows(); ++i)
    CHECK(a.gamma.row(perm[i]) == b.gamma.row(static_cast<Eigen::Index>(i)));
}
