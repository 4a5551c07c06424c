#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "gmc/analysis.hpp"
#include "gmc/errors.hpp"
#include "gmc/fitdir.hpp"
#include "gmc/imputation.hpp"
#include "gmc/simbench.hpp"

namespace gmc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const std::string& stem, std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return stem + buf + ext;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
}

void print_resolved(std::ostream& out, const json& config) {
  out << "resolved config: " << config.dump() << "\n";
  if (config.contains("seed")) out << "seed: " << config["seed"].dump() << "\n";
}

// Flags that override a run config; unset flags leave the config alone.
struct ChainFlags {
  std::optional<int> n_iter, burn_in, thin, H, k;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::optional<std::string> margin;

  void add(CLI::App* app) {
    app->add_option("--n-iter", n_iter, "total Gibbs iterations");
    app->add_option("--burn-in", burn_in, "discarded iterations");
    app->add_option("--thin", thin, "keep every thin-th iteration after burn-in");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--H", H, "truncation level of the mixture");
    app->add_option("--k", k, "number of latent factors");
    app->add_option("--delta", delta, "NIW scale");
    app->add_option("--margin", margin, "margin_adjust or ecdf");
  }

  void apply(RunConfig& c) const {
    if (n_iter) c.chain.n_iter = *n_iter;
    if (burn_in) c.chain.burn_in = *burn_in;
    if (thin) c.chain.thin = *thin;
    if (seed) c.chain.seed = *seed;
    if (margin) c.margin = margin_kind_from_string(*margin);
    json hyper;
    if (H) hyper["H"] = *H;
    if (k) hyper["k"] = *k;
    if (delta) hyper["delta"] = *delta;
    if (!hyper.empty()) c.chain.hyper = hyperparams_from_json(hyper, c.chain.hyper);
  }
};

RunConfig resolve(std::size_t p_star, const std::string& config_path, const ChainFlags& flags,
                  std::optional<double> design_delta = std::nullopt) {
  RunConfig c;
  c.chain.hyper = default_hyperparams(p_star);
  if (design_delta) c.chain.hyper.delta = *design_delta;
  if (!config_path.empty()) {
    json j;
    try {
      j = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config " + config_path + ": " + e.what());
    }
    c = run_config_from_json(j, c);
  }
  flags.apply(c);
  c.validate(p_star);
  return c;
}

std::vector<std::size_t> spread_indices(std::size_t available, std::size_t wanted) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < wanted; ++t) idx.push_back(t * available / wanted);
  return idx;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian mixture copula imputation for mixed data"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "run the Gibbs sampler and store retained draws");
  std::string data_path, schema_path, config_path, out_dir;
  ChainFlags fit_flags;
  fit->add_option("--data", data_path, "CSV data file")->required();
  fit->add_option("--schema", schema_path, "schema JSON")->required();
  fit->add_option("--config", config_path, "JSON run config");
  fit->add_option("--out", out_dir, "fit directory")->required();
  fit_flags.add(fit);

  // impute
  auto* imp = app.add_subcommand("impute", "write completed datasets from a fit");
  std::string fit_dir;
  std::size_t m = 0;
  std::optional<std::uint64_t> imp_seed;
  std::optional<std::string> imp_margin;
  imp->add_option("--fit-dir", fit_dir, "fit directory")->required();
  imp->add_option("--m", m, "number of completed datasets")->required();
  imp->add_option("--seed", imp_seed, "seed for categorical draws");
  imp->add_option("--margin", imp_margin, "margin_adjust or ecdf");
  imp->add_option("--out", out_dir, "output directory")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "write posterior predictive datasets");
  std::size_t n_new = 0, reps = 1;
  std::string strata, target, quantiles = "0.1,0.25,0.5,0.75,0.9";
  pred->add_option("--fit-dir", fit_dir, "fit directory")->required();
  pred->add_option("--n", n_new, "rows per dataset")->required();
  pred->add_option("--reps", reps, "number of datasets");
  pred->add_option("--seed", imp_seed, "seed");
  pred->add_option("--margin", imp_margin, "margin_adjust or ecdf");
  pred->add_option("--out", out_dir, "output directory")->required();
  pred->add_option("--strata", strata, "comma-separated categorical stratum variables");
  pred->add_option("--target", target, "numeric variable to summarise by quantile");
  pred->add_option("--quantiles", quantiles, "comma-separated quantile levels");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate benchmark datasets");
  sim->require_subcommand(1);
  auto* sim1 = sim->add_subcommand("study1", "nonlinear mixed data with MAR on |Y1|");
  Study1Config s1;
  sim1->add_option("--n", s1.n, "rows");
  sim1->add_option("--beta", s1.beta, "MAR strength");
  sim1->add_option("--seed", s1.seed, "seed");
  sim1->add_option("--out", out_dir, "output directory")->required();
  auto* sim2 = sim->add_subcommand("study2", "regression data with MAR covariates");
  Study2Config s2;
  std::string base_csv;
  sim2->add_option("--base", base_csv, "CSV with FI, Age, BMI (synthetic if omitted)");
  sim2->add_option("--snr", s2.snr, "signal-to-noise ratio");
  sim2->add_option("--replicates", s2.replicates, "number of replicates");
  sim2->add_option("--protected-rows", s2.protected_rows, "rows exempt from masking");
  sim2->add_option("--seed", s2.seed, "seed");
  sim2->add_option("--out", out_dir, "output directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run a simulation study end to end");
  std::string design, methods = "gmc_ma,gmc_ecdf,complete_case";
  std::size_t threads = 1;
  ChainFlags ev_flags;
  ev->add_option("--design", design, "study1 or study2")->required()->check(CLI::IsMember({"study1", "study2"}));
  ev->add_option("--method", methods, "comma-separated methods (study2)");
  ev->add_option("--replicates", s2.replicates, "replicates (study2)");
  ev->add_option("--m", s2.m, "imputations per replicate (study2)");
  ev->add_option("--snr", s2.snr, "signal-to-noise ratio (study2)");
  ev->add_option("--base", base_csv, "base covariates CSV (study2)");
  ev->add_option("--n", s1.n, "rows (study1)");
  ev->add_option("--beta", s1.beta, "MAR strength (study1)");
  ev->add_option("--threads", threads, "parallel replicates");
  ev->add_option("--config", config_path, "JSON run config");
  ev->add_option("--out", out_dir, "output directory")->required();
  ev_flags.add(ev);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*fit) {
      MixedDataset data = load_dataset(data_path, schema_path);
      const auto p_star = expand_rpl(data).p_star();
      RunConfig cfg = resolve(p_star, config_path, fit_flags);
      print_resolved(out, run_config_to_json(cfg));
      auto result = fit_to_directory(data, cfg, out_dir);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      out << "retained draws: " << result.draws.size() << "\n";
      return 0;
    }
    if (*imp) {
      LoadedFit f = load_fit(fit_dir);
      if (m == 0) throw ConfigError("--m must be positive");
      if (m > f.draws.size())
        throw ConfigError("--m " + std::to_string(m) + " exceeds the " + std::to_string(f.draws.size()) +
                          " retained draws");
      const std::uint64_t seed = imp_seed.value_or(f.config.chain.seed);
      const MarginKind kind = imp_margin ? margin_kind_from_string(*imp_margin) : f.config.margin;
      print_resolved(out, {{"fit_dir", fit_dir}, {"m", m}, {"margin", std::string(to_string(kind))}, {"seed", seed}});
      std::vector<Draw> chosen;
      for (auto i : spread_indices(f.draws.size(), m)) chosen.push_back(f.draws[i]);
      auto completed = multiple_impute(chosen, f.data, f.view, seed, kind);
      ensure_dir(out_dir);
      for (std::size_t t = 0; t < completed.size(); ++t)
        write_dataset(completed[t].data, fs::path(out_dir) / numbered("imputed", t + 1, ".csv"));
      write_schema(f.data.schema, fs::path(out_dir) / kSchemaFile);
      out << "wrote " << completed.size() << " completed datasets\n";
      return 0;
    }
    if (*pred) {
      LoadedFit f = load_fit(fit_dir);
      if (n_new == 0 || reps == 0) throw ConfigError("--n and --reps must be positive");
      const std::uint64_t seed = imp_seed.value_or(f.config.chain.seed);
      const MarginKind kind = imp_margin ? margin_kind_from_string(*imp_margin) : f.config.margin;
      print_resolved(out, {{"fit_dir", fit_dir}, {"n", n_new}, {"reps", reps},
                           {"margin", std::string(to_string(kind))}, {"seed", seed}});
      auto datasets = posterior_predictive(f.draws, f.data, f.view, n_new, reps, seed, kind);
      ensure_dir(out_dir);
      for (std::size_t t = 0; t < datasets.size(); ++t)
        write_dataset(datasets[t], fs::path(out_dir) / numbered("predictive", t + 1, ".csv"));
      write_schema(f.data.schema, fs::path(out_dir) / kSchemaFile);
      if (!target.empty()) {
        std::vector<double> qs;
        for (const auto& s : split_list(quantiles)) {
          try {
            qs.push_back(std::stod(s));
          } catch (const std::exception&) {
            throw ConfigError("bad quantile '" + s + "'");
          }
        }
        auto rows = stratified_quantile_summary(datasets, split_list(strata), target, qs);
        write_text(fs::path(out_dir) / "quantile_summary.csv", quantile_summary_to_csv(rows));
      }
      out << "wrote " << datasets.size() << " predictive datasets\n";
      return 0;
    }
    if (*sim1) {
      s1.validate();
      print_resolved(out, {{"design", "study1"}, {"n", s1.n}, {"beta", s1.beta}, {"seed", s1.seed}});
      auto pair = gen_study1(s1);
      ensure_dir(out_dir);
      write_dataset(pair.full, fs::path(out_dir) / "full.csv");
      write_dataset(pair.masked, fs::path(out_dir) / "masked.csv");
      write_schema(pair.full.schema, fs::path(out_dir) / kSchemaFile);
      out << "complete cases: " << pair.masked.complete_case_count() << " of " << pair.masked.rows() << "\n";
      return 0;
    }
    if (*sim2) {
      if (!base_csv.empty()) s2.base_csv = base_csv;
      s2.validate();
      print_resolved(out, {{"design", "study2"}, {"snr", s2.snr}, {"replicates", s2.replicates},
                           {"protected_rows", s2.protected_rows},
                           {"base", base_csv.empty() ? json("synthetic") : json(base_csv)},
                           {"seed", s2.seed}});
      auto pairs = gen_study2(s2);
      ensure_dir(out_dir);
      for (std::size_t r = 0; r < pairs.size(); ++r) {
        const fs::path dir = fs::path(out_dir) / numbered("replicate", r + 1, "");
        ensure_dir(dir);
        write_dataset(pairs[r].full, dir / "full.csv");
        write_dataset(pairs[r].masked, dir / "masked.csv");
        write_schema(pairs[r].full.schema, dir / kSchemaFile);
      }
      out << "wrote " << pairs.size() << " replicates\n";
      return 0;
    }
    if (*ev) {
      ensure_dir(out_dir);
      if (design == "study1") {
        s1.seed = ev_flags.seed.value_or(s1.seed);
        auto pair = gen_study1(s1);
        auto view = expand_rpl(pair.masked);
        RunConfig cfg = resolve(view.p_star(), config_path, ev_flags);
        json shown = run_config_to_json(cfg);
        shown["design"] = "study1";
        shown["n"] = s1.n;
        shown["beta"] = s1.beta;
        print_resolved(out, shown);
        auto result = run_chain(pair.masked, view, cfg.chain);
        auto report = study1_margin_report(pair, view, result.draws, s1.beta);
        write_text(fs::path(out_dir) / "y2_margin.csv", study1_curve_csv(report));
        json summary = {{"sup_margin_adjust", report.sup_ma},
                        {"sup_observed_ecdf", report.sup_observed},
                        {"p3_mean", report.p3_mean},
                        {"p3_interval", {report.p3_lo, report.p3_hi}},
                        {"p3_observed", report.p3_observed},
                        {"p3_full_sample", report.p3_true_sample}};
        write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
        out << summary.dump(2) << "\n";
        return 0;
      }
      if (!base_csv.empty()) s2.base_csv = base_csv;
      s2.seed = ev_flags.seed.value_or(s2.seed);
      s2.validate();
      BenchmarkConfig bc;
      bc.methods.clear();
      for (const auto& name : split_list(methods)) bc.methods.push_back(method_from_string(name));
      bc.m = s2.m;
      bc.threads = threads;
      bc.seed = s2.seed;
      RunConfig cfg = resolve(6, config_path, ev_flags, 5.0);
      bc.chain = cfg.chain;
      json shown = run_config_to_json(cfg);
      shown["design"] = "study2";
      shown["replicates"] = s2.replicates;
      shown["m"] = s2.m;
      shown["snr"] = s2.snr;
      shown["methods"] = methods;
      shown["threads"] = threads;
      print_resolved(out, shown);
      auto pairs = gen_study2(s2);
      auto fits = fit_replicates(pairs, bc);
      auto rows = summarize_fits(fits, s2.beta_true);
      const std::string csv = metrics_csv(rows);
      write_text(fs::path(out_dir) / "metrics.csv", csv);
      out << csv;
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace gmc::cli
