#pragma once

// Column schema and delimited-text ingestion. Discretization boundaries and
// categorical vocabularies are frozen on first ingest and reused verbatim
// afterwards, so test data never re-derives them.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mbct/core.hpp"
#include <json.hpp>

namespace mbct {

enum class ColumnRole { Feature, Prediction, Label, TrueProb, Ignore };
enum class Discretization { None, Quantile, EqualWidth };

const char* to_string(ColumnRole role);
const char* to_string(Discretization d);

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::Feature;
  Discretization discretization = Discretization::None;  // None: categorical tokens
  std::uint32_t buckets = 0;                             // k for Quantile / EqualWidth

  // Frozen state.
  bool frozen = false;
  std::vector<double> boundaries;        // bucket = number of boundaries <= value
  std::optional<double> range_lo, range_hi;  // EqualWidth range; from the data when unset
  std::vector<std::string> vocabulary;   // categorical ids in first-seen order; unseen -> size()

  std::uint32_t cardinality() const;
  FeatureValue encode(std::string_view token, std::size_t line) const;
};

struct Schema {
  std::vector<ColumnSpec> columns;

  void validate() const;
  bool frozen() const;
  std::vector<std::string> feature_names() const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::string& path);
  /// "prediction" and "label" by name, "true_prob" if present, every other
  /// column a categorical feature.
  static Schema from_header(const std::vector<std::string>& header);
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(std::string_view text);

/// Quantile cut points: k-quantiles with duplicates and cut points at or
/// below the minimum dropped.
std::vector<double> quantile_boundaries(std::vector<double> values, std::uint32_t k);

/// Builds a dataset. Freezes `schema` first when it is not yet frozen.
Dataset table_to_dataset(const CsvTable& table, Schema& schema);
Dataset ingest(const std::string& path, Schema& schema);

}  // namespace mbct
