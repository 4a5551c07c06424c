#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "gmc/dataset.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = gmc::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("gmc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_files(const fs::path& dir, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"fit", "--bogus"}).code == 1);
  auto r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate study1 writes paired files") {
  auto dir = scratch("sim1");
  auto r = run({"simulate", "study1", "--n", "200", "--beta", "1", "--seed", "7", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "full.csv"));
  CHECK(fs::exists(dir / "masked.csv"));
  CHECK(fs::exists(dir / "schema.json"));
  CHECK(r.out.find("seed: 7") != std::string::npos);
  auto masked = gmc::load_dataset(dir / "masked.csv", dir / "schema.json");
  CHECK(masked.rows() == 200);
  CHECK(masked.missing_count() > 0);
  fs::remove_all(dir);
}

TEST_CASE("fit, impute and predict") {
  auto dir = scratch("fit");
  auto d = gmc::test::mixed_toy(40, 0.2, 4);
  gmc::write_dataset(d, dir / "d.csv");
  gmc::write_schema(d.schema, dir / "s.json");

  auto bad = run({"fit", "--data", (dir / "d.csv").string(), "--schema", (dir / "s.json").string(), "--out",
                  (dir / "f").string(), "--n-iter", "10", "--burn-in", "10"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("burn_in") != std::string::npos);

  auto missing = run({"fit", "--data", (dir / "nope.csv").string(), "--schema", (dir / "s.json").string(),
                      "--out", (dir / "f").string()});
  CHECK(missing.code == 2);

  auto fit = run({"fit", "--data", (dir / "d.csv").string(), "--schema", (dir / "s.json").string(), "--out",
                  (dir / "f").string(), "--n-iter", "60", "--burn-in", "20", "--thin", "2", "--seed", "3"});
  REQUIRE(fit.code == 0);
  CHECK(fit.out.find("resolved config") != std::string::npos);
  CHECK(fs::exists(dir / "f" / "draws.jsonl"));
  CHECK(fs::exists(dir / "f" / "manifest.json"));

  auto imp = run({"impute", "--fit-dir", (dir / "f").string(), "--m", "20", "--out", (dir / "imp").string()});
  REQUIRE(imp.code == 0);
  CHECK(count_files(dir / "imp", "imputed_") == 20);
  CHECK(run({"impute", "--fit-dir", (dir / "f").string(), "--m", "21", "--out", (dir / "imp2").string()}).code == 1);

  auto pred = run({"predict", "--fit-dir", (dir / "f").string(), "--n", "30", "--reps", "5", "--out",
                   (dir / "pred").string(), "--strata", "g", "--target", "x", "--quantiles", "0.75,0.9"});
  REQUIRE(pred.code == 0);
  CHECK(count_files(dir / "pred", "predictive_") == 5);
  CHECK(fs::exists(dir / "pred" / "quantile_summary.csv"));
  fs::remove_all(dir);
}

TEST_CASE("malformed data exits 2") {
  auto dir = scratch("bad");
  std::ofstream(dir / "s.json") << R"({"columns":[{"name":"x","kind":"continuous"},{"name":"y","kind":"count"}]})";
  std::ofstream(dir / "d.csv") << "x,y\n1,2\n2,oops\n";
  auto r = run({"fit", "--data", (dir / "d.csv").string(), "--schema", (dir / "s.json").string(), "--out",
                (dir / "f").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("y") != std::string::npos);
  fs::remove_all(dir);
}
