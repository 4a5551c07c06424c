#include "gmc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gmc {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::optional<double> parse_real(std::string_view token) {
  // from_chars is locale independent; it rejects a leading '+'.
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\r\n") != std::string::npos;
}

std::string quote(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::continuous: return "continuous";
    case Kind::count: return "count";
    case Kind::ordinal: return "ordinal";
    case Kind::categorical: return "categorical";
  }
  return "continuous";
}

Kind kind_from_string(std::string_view s) {
  if (s == "continuous") return Kind::continuous;
  if (s == "count") return Kind::count;
  if (s == "ordinal") return Kind::ordinal;
  if (s == "categorical") return Kind::categorical;
  throw SchemaError("unknown column kind '" + std::string(s) + "'");
}

std::optional<double> ColumnSpec::effective_lo() const {
  if (support_lo) return support_lo;
  if (kind == Kind::count) return 0.0;
  return std::nullopt;
}

std::optional<double> ColumnSpec::effective_hi() const { return support_hi; }

std::optional<int> ColumnSpec::level_index(std::string_view label) const {
  for (std::size_t m = 0; m < levels.size(); ++m)
    if (levels[m] == label) return static_cast<int>(m);
  return std::nullopt;
}

void ColumnSpec::validate() const {
  if (name.empty()) throw SchemaError("column with empty name");
  if (has_levels()) {
    std::set<std::string> distinct(levels.begin(), levels.end());
    if (distinct.size() != levels.size())
      throw SchemaError("column '" + name + "' has duplicate levels");
    if (kind == Kind::categorical && levels.size() < 2)
      throw SchemaError("categorical column '" + name + "' needs at least 2 levels");
    if (kind == Kind::ordinal && levels.empty())
      throw SchemaError("ordinal column '" + name + "' has no levels");
  } else if (!levels.empty()) {
    throw SchemaError("numeric column '" + name + "' must not declare levels");
  }
  if (as_orthant && kind != Kind::ordinal)
    throw SchemaError("as_orthant applies to ordinal columns only ('" + name + "')");
  if (as_orthant && levels.size() < 2)
    throw SchemaError("orthant ordinal '" + name + "' needs at least 2 levels");
  auto lo = effective_lo();
  auto hi = effective_hi();
  if (lo && hi && !(*lo < *hi))
    throw SchemaError("column '" + name + "' has support_lo >= support_hi");
}

std::size_t MixedDataset::column_index(std::string_view name) const {
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (schema[j].name == name) return j;
  throw SchemaError("no column named '" + std::string(name) + "'");
}

std::size_t MixedDataset::missing_count() const {
  return static_cast<std::size_t>(missing.count());
}

std::size_t MixedDataset::complete_case_count() const {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < missing.rows(); ++i)
    if (!missing.row(i).any()) ++n;
  return n;
}

void MixedDataset::validate() const {
  if (static_cast<std::size_t>(cells.cols()) != schema.size() ||
      missing.rows() != cells.rows() || missing.cols() != cells.cols())
    throw FormatError("dataset shape does not match schema");
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& spec = schema[j];
    spec.validate();
    auto lo = spec.effective_lo();
    auto hi = spec.effective_hi();
    for (Eigen::Index i = 0; i < cells.rows(); ++i) {
      double v = cells(i, j);
      if (missing(i, j)) {
        if (!std::isnan(v))
          throw SchemaError("missing cell (" + std::to_string(i) + ", " + spec.name +
                            ") holds a value");
        continue;
      }
      if (!std::isfinite(v))
        throw SchemaError("observed cell (" + std::to_string(i) + ", " + spec.name +
                          ") is not finite");
      if (spec.has_levels()) {
        if (v != std::floor(v) || v < 0 || v >= static_cast<double>(spec.levels.size()))
          throw SchemaError("invalid level index at row " + std::to_string(i) +
                            ", column " + spec.name);
      } else {
        if ((lo && v < *lo) || (hi && v > *hi))
          throw SchemaError("value outside support at row " + std::to_string(i) +
                            ", column " + spec.name);
      }
    }
  }
}

MixedDataset make_dataset(Schema schema, std::size_t n) {
  MixedDataset d;
  d.schema = std::move(schema);
  const auto p = static_cast<Eigen::Index>(d.schema.size());
  d.cells = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), p,
                                      std::numeric_limits<double>::quiet_NaN());
  d.missing = BoolMatrix::Constant(static_cast<Eigen::Index>(n), p, true);
  return d;
}

Schema parse_schema(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array())
    throw SchemaError("schema must be an object with a 'columns' array");
  Schema schema;
  std::set<std::string> names;
  for (const auto& col : doc["columns"]) {
    ColumnSpec spec;
    try {
      spec.name = col.at("name").get<std::string>();
      spec.kind = kind_from_string(col.at("kind").get<std::string>());
      if (col.contains("levels")) spec.levels = col["levels"].get<std::vector<std::string>>();
      if (col.contains("support")) {
        const auto& s = col["support"];
        if (!s.is_array() || s.size() != 2) throw SchemaError("support must be [lo, hi]");
        if (!s[0].is_null()) spec.support_lo = s[0].get<double>();
        if (!s[1].is_null()) spec.support_hi = s[1].get<double>();
      }
      if (col.contains("as_orthant")) spec.as_orthant = col["as_orthant"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed schema column: ") + e.what());
    }
    if (!names.insert(spec.name).second)
      throw SchemaError("duplicate column name '" + spec.name + "'");
    spec.validate();
    schema.push_back(std::move(spec));
  }
  if (schema.empty()) throw SchemaError("schema has no columns");
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return parse_schema(read_text_file(path)); }

std::string schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& spec : schema) {
    nlohmann::json c;
    c["name"] = spec.name;
    c["kind"] = std::string(to_string(spec.kind));
    if (spec.has_levels()) c["levels"] = spec.levels;
    if (spec.support_lo || spec.support_hi) {
      c["support"] = nlohmann::json::array(
          {spec.support_lo ? nlohmann::json(*spec.support_lo) : nlohmann::json(nullptr),
           spec.support_hi ? nlohmann::json(*spec.support_hi) : nlohmann::json(nullptr)});
    }
    if (spec.as_orthant) c["as_orthant"] = true;
    cols.push_back(std::move(c));
  }
  return nlohmann::json{{"columns", cols}}.dump(2) + "\n";
}

void write_schema(const Schema& schema, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << schema_to_json(schema);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A bare trailing newline yields a single empty field; drop it.
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(record);
    record.clear();
    field_started = false;
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    char c = text[k];
    if (in_quotes) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw FormatError("stray quote on line " + std::to_string(line));
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw FormatError("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

MixedDataset parse_dataset(std::string_view csv_text, Schema schema) {
  auto records = parse_csv(csv_text);
  if (records.empty()) throw FormatError("CSV has no header row");
  const auto& header = records.front();
  if (header.size() != schema.size())
    throw FormatError("CSV header has " + std::to_string(header.size()) +
                      " columns, schema has " + std::to_string(schema.size()));
  for (std::size_t j = 0; j < header.size(); ++j)
    if (trim(header[j]) != schema[j].name)
      throw FormatError("CSV header column " + std::to_string(j) + " is '" + header[j] +
                        "', schema expects '" + schema[j].name + "'");

  MixedDataset d = make_dataset(std::move(schema), records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto i = static_cast<Eigen::Index>(r - 1);
    if (rec.size() != d.cols())
      throw FormatError("row " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                        " fields, expected " + std::to_string(d.cols()));
    for (std::size_t j = 0; j < rec.size(); ++j) {
      const auto& spec = d.schema[j];
      std::string token = trim(rec[j]);
      if (token.empty() || token == "NA") continue;
      double value;
      if (spec.has_levels()) {
        auto idx = spec.level_index(token);
        if (!idx)
          throw SchemaError("unknown level '" + token + "' at row " + std::to_string(r) +
                            ", column " + spec.name);
        value = *idx;
      } else {
        auto parsed = parse_real(token);
        if (!parsed)
          throw ParseError("non-numeric token '" + token + "' at row " + std::to_string(r) +
                           ", column " + spec.name);
        value = *parsed;
      }
      d.cells(i, static_cast<Eigen::Index>(j)) = value;
      d.missing(i, static_cast<Eigen::Index>(j)) = false;
    }
  }
  d.validate();
  return d;
}

MixedDataset load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& schema_path) {
  return parse_dataset(read_text_file(csv_path), load_schema(schema_path));
}

std::string dataset_to_csv(const MixedDataset& data) {
  std::string out;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    if (j) out += ',';
    out += quote(data.schema[j].name);
  }
  out += '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      if (data.missing(i, j)) {
        out += "NA";
        continue;
      }
      const auto& spec = data.schema[j];
      double v = data.cells(i, j);
      if (spec.has_levels()) {
        out += quote(spec.levels[static_cast<std::size_t>(v)]);
      } else if (spec.kind == Kind::count) {
        out += format_real(std::round(v));
      } else {
        out += format_real(v);
      }
    }
    out += '\n';
  }
  return out;
}

void write_dataset(const MixedDataset& data, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + csv_path.string());
  out << dataset_to_csv(data);
}

AugmentedView expand_rpl(const MixedDataset& data) {
  AugmentedView view;
  view.columns_of.resize(data.cols());
  for (std::size_t v = 0; v < data.cols(); ++v) {
    const auto& spec = data.schema[v];
    if (spec.rank_based()) {
      view.columns_of[v].push_back(view.columns.size());
      view.columns.push_back({v, LatentRole::rank, -1});
    } else if (spec.levels.size() == 2) {
      view.columns_of[v].push_back(view.columns.size());
      view.columns.push_back({v, LatentRole::binary, 1});
    } else {
      for (std::size_t m = 0; m < spec.levels.size(); ++m) {
        view.columns_of[v].push_back(view.columns.size());
        view.columns.push_back({v, LatentRole::level, static_cast<int>(m)});
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(data.rows());
  view.gamma = Eigen::MatrixXi::Constant(n, static_cast<Eigen::Index>(view.p_star()), -1);
  for (std::size_t c = 0; c < view.p_star(); ++c) {
    const auto& col = view.columns[c];
    if (col.role == LatentRole::rank) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.missing(i, col.source)) continue;
      int level = static_cast<int>(data.cells(i, col.source));
      view.gamma(i, c) = level == col.level ? 1 : 0;
    }
  }
  return view;
}

}  // namespace gmc
