#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmc/dataset.hpp"
#include "gmc/margins.hpp"
#include "gmc/sampler.hpp"

namespace gmc {

struct RunConfig {
  ChainConfig chain;
  MarginKind margin = MarginKind::margin_adjust;
  std::size_t threads = 1;

  void validate(std::size_t p_star) const;
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Overlays the keys present in `j` onto `base`. Hyperparameters live under "hyper".
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base);

/// 64-bit FNV-1a of the canonical schema JSON, as 16 hex digits.
std::string schema_hash(const Schema& schema);

// Files inside a fit directory.
inline constexpr const char* kDrawsFile = "draws.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kDataFile = "data.csv";
inline constexpr const char* kSchemaFile = "schema.json";

/// Runs the chain and writes data.csv, schema.json, draws.jsonl (one retained
/// draw per line, in iteration order) and manifest.json into `dir`.
ChainResult fit_to_directory(const MixedDataset& data, const RunConfig& config,
                             const std::filesystem::path& dir);

struct LoadedFit {
  MixedDataset data;
  AugmentedView view;
  RunConfig config;
  std::vector<Draw> draws;
  nlohmann::json manifest;
};

/// Reads a fit directory back, checking the schema hash against the manifest.
LoadedFit load_fit(const std::filesystem::path& dir);

}  // namespace gmc
