#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmc/errors.hpp"

namespace gmc {

enum class Kind { continuous, count, ordinal, categorical };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view s);

struct ColumnSpec {
  std::string name;
  Kind kind = Kind::continuous;
  std::vector<std::string> levels;
  std::optional<double> support_lo;
  std::optional<double> support_hi;
  // Ordinal only: use the diagonal-orthant expansion instead of ranks.
  bool as_orthant = false;

  bool has_levels() const { return kind == Kind::ordinal || kind == Kind::categorical; }
  // Rank-likelihood columns: continuous, count, and ordinal without as_orthant.
  bool rank_based() const {
    return kind == Kind::continuous || kind == Kind::count ||
           (kind == Kind::ordinal && !as_orthant);
  }
  bool orthant_based() const { return !rank_based(); }
  // Support bounds after kind defaults (count implies lo >= 0).
  std::optional<double> effective_lo() const;
  std::optional<double> effective_hi() const;
  // Index of `label` in levels, or nullopt.
  std::optional<int> level_index(std::string_view label) const;

  void validate() const;
};

using Schema = std::vector<ColumnSpec>;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// An n x p table of typed cells. Numeric cells carry their value; ordinal
/// and categorical cells carry the level index. Missing cells are NaN and
/// flagged true in `missing`.
struct MixedDataset {
  Schema schema;
  Eigen::MatrixXd cells;
  BoolMatrix missing;

  std::size_t rows() const { return static_cast<std::size_t>(cells.rows()); }
  std::size_t cols() const { return schema.size(); }
  bool is_missing(std::size_t i, std::size_t j) const { return missing(i, j); }
  std::size_t column_index(std::string_view name) const;
  std::size_t missing_count() const;
  std::size_t complete_case_count() const;

  // Throws SchemaError if any invariant is broken.
  void validate() const;
};

MixedDataset make_dataset(Schema schema, std::size_t n);

Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(std::string_view json_text);
std::string schema_to_json(const Schema& schema);
void write_schema(const Schema& schema, const std::filesystem::path& path);

MixedDataset load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& schema_path);
MixedDataset parse_dataset(std::string_view csv_text, Schema schema);
std::string dataset_to_csv(const MixedDataset& data);
void write_dataset(const MixedDataset& data, const std::filesystem::path& csv_path);

std::string read_text_file(const std::filesystem::path& path);

// Splits RFC-4180 CSV text into records of unquoted fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Role of one latent column in the rank-probit expansion.
enum class LatentRole { rank, binary, level };

struct LatentColumn {
  std::size_t source = 0;
  LatentRole role = LatentRole::rank;
  // Level indicated by this column (level role), or the positive level (binary).
  int level = -1;
};

/// Rank-probit expansion of a dataset: numeric variables map to one latent
/// column, binary variables to one sign-coded column, and k-level (k >= 3)
/// orthant variables to k indicator columns.
struct AugmentedView {
  std::vector<LatentColumn> columns;
  // columns_of[v] lists the latent columns sourced from variable v.
  std::vector<std::vector<std::size_t>> columns_of;
  // n x p* indicators for orthant columns: 1, 0, or -1 when unset (missing
  // cell or rank column).
  Eigen::MatrixXi gamma;

  std::size_t p_star() const { return columns.size(); }
};

AugmentedView expand_rpl(const MixedDataset& data);

}  // namespace gmc
