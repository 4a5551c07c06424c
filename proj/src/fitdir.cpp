#include "gmc/fitdir.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gmc/errors.hpp"

namespace gmc {

namespace fs = std::filesystem;

void RunConfig::validate(std::size_t p_star) const {
  chain.validate(p_star);
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"n_iter", c.chain.n_iter},
          {"burn_in", c.chain.burn_in},
          {"thin", c.chain.thin},
          {"seed", c.chain.seed},
          {"margin", std::string(to_string(c.margin))},
          {"threads", c.threads},
          {"hyper", hyperparams_to_json(c.chain.hyper)}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* known[] = {"n_iter", "burn_in", "thin", "seed", "margin", "threads", "hyper"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    if (j.contains("n_iter")) c.chain.n_iter = j["n_iter"].get<int>();
    if (j.contains("burn_in")) c.chain.burn_in = j["burn_in"].get<int>();
    if (j.contains("thin")) c.chain.thin = j["thin"].get<int>();
    if (j.contains("seed")) c.chain.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("margin")) c.margin = margin_kind_from_string(j["margin"].get<std::string>());
    if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (j.contains("hyper")) c.chain.hyper = hyperparams_from_json(j["hyper"], c.chain.hyper);
  return c;
}

std::string schema_hash(const Schema& schema) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : schema_to_json(schema)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

nlohmann::json timings_json(const BlockTimings& t) {
  return {{"clusters", t.clusters}, {"factors", t.factors}, {"latent", t.latent}, {"margins", t.margins}};
}

}  // namespace

ChainResult fit_to_directory(const MixedDataset& data, const RunConfig& config, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  const AugmentedView view = expand_rpl(data);
  config.validate(view.p_star());

  write_dataset(data, dir / kDataFile);
  write_schema(data.schema, dir / kSchemaFile);

  std::ofstream draws(dir / kDrawsFile, std::ios::binary);
  if (!draws) throw ConfigError("cannot write " + (dir / kDrawsFile).string());
  ChainResult result = run_chain(data, view, config.chain, [&](const Draw& d) {
    draws << draw_to_json(d).dump() << '\n';
  });
  draws.close();
  nlohmann::json manifest = {{"config", run_config_to_json(config)},
                             {"seed", config.chain.seed},
                             {"schema_hash", schema_hash(data.schema)},
                             {"rows", data.rows()},
                             {"p_star", view.p_star()},
                             {"retained", result.draws.size()},
                             {"max_occupied", result.max_occupied},
                             {"warnings", result.warnings},
                             {"timings_seconds", timings_json(result.timings)}};
  write_text(dir / kManifestFile, manifest.dump(2) + "\n");
  return result;
}

LoadedFit load_fit(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("fit directory not found: " + dir.string());
  LoadedFit fit;
  try {
    fit.manifest = nlohmann::json::parse(read_text_file(dir / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  fit.data = load_dataset(dir / kDataFile, dir / kSchemaFile);
  if (fit.manifest.value("schema_hash", std::string()) != schema_hash(fit.data.schema))
    throw SchemaError("schema.json does not match the manifest's schema hash");
  fit.view = expand_rpl(fit.data);
  fit.config = run_config_from_json(fit.manifest.at("config"), RunConfig{});

  std::ifstream in(dir / kDrawsFile, std::ios::binary);
  if (!in) throw DataError("cannot open " + (dir / kDrawsFile).string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fit.draws.push_back(draw_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("draws.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (fit.draws.empty()) throw DataError("fit directory holds no retained draws");
  return fit;
}

}  // namespace gmc
