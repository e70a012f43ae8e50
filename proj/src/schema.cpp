#include "mbct/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mbct/error.hpp"

namespace mbct {

namespace {

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw Error("line " + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view token, std::size_t line, const std::string& column) {
  while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
  while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
    line_error(line, "column '" + column + "': not a number: '" + std::string(token) + "'");
  }
  return v;
}

ColumnRole parse_role(const std::string& s) {
  if (s == "feature") return ColumnRole::Feature;
  if (s == "prediction") return ColumnRole::Prediction;
  if (s == "label") return ColumnRole::Label;
  if (s == "true_prob") return ColumnRole::TrueProb;
  if (s == "ignore") return ColumnRole::Ignore;
  throw Error("schema: unknown role '" + s + "'");
}

void parse_discretization(const std::string& s, ColumnSpec& c) {
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "none") {
    c.discretization = Discretization::None;
    return;
  }
  if (head == "quantile") {
    c.discretization = Discretization::Quantile;
  } else if (head == "equal_width") {
    c.discretization = Discretization::EqualWidth;
  } else {
    throw Error("schema: unknown discretization '" + s + "'");
  }
  c.buckets = 100;
  if (colon != std::string::npos) {
    const auto k = s.substr(colon + 1);
    const auto res = std::from_chars(k.data(), k.data() + k.size(), c.buckets);
    if (res.ec != std::errc{} || res.ptr != k.data() + k.size() || c.buckets < 1) {
      throw Error("schema: bad bucket count in '" + s + "'");
    }
  }
}

}  // namespace

const char* to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::Feature: return "feature";
    case ColumnRole::Prediction: return "prediction";
    case ColumnRole::Label: return "label";
    case ColumnRole::TrueProb: return "true_prob";
    case ColumnRole::Ignore: return "ignore";
  }
  return "?";
}

const char* to_string(Discretization d) {
  switch (d) {
    case Discretization::None: return "none";
    case Discretization::Quantile: return "quantile";
    case Discretization::EqualWidth: return "equal_width";
  }
  return "?";
}

std::uint32_t ColumnSpec::cardinality() const {
  switch (discretization) {
    case Discretization::None: return static_cast<std::uint32_t>(vocabulary.size() + 1);
    case Discretization::Quantile: return static_cast<std::uint32_t>(boundaries.size() + 1);
    case Discretization::EqualWidth: return buckets;
  }
  return 1;
}

FeatureValue ColumnSpec::encode(std::string_view token, std::size_t line) const {
  switch (discretization) {
    case Discretization::None: {
      const auto it = std::find(vocabulary.begin(), vocabulary.end(), token);
      return static_cast<FeatureValue>(it - vocabulary.begin());
    }
    case Discretization::Quantile: {
      const double v = parse_real(token, line, name);
      return static_cast<FeatureValue>(std::upper_bound(boundaries.begin(), boundaries.end(), v) - boundaries.begin());
    }
    case Discretization::EqualWidth: {
      const double v = parse_real(token, line, name);
      const double lo = range_lo.value_or(0.0), hi = range_hi.value_or(1.0);
      if (!(hi > lo)) return 0;
      const double scaled = std::floor((v - lo) / (hi - lo) * buckets);
      return static_cast<FeatureValue>(std::clamp(scaled, 0.0, static_cast<double>(buckets - 1)));
    }
  }
  return 0;
}

void Schema::validate() const {
  std::size_t predictions = 0, labels = 0, truths = 0;
  std::map<std::string, int> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw Error("schema: empty column name");
    if (seen[c.name]++) throw Error("schema: duplicate column '" + c.name + "'");
    predictions += c.role == ColumnRole::Prediction;
    labels += c.role == ColumnRole::Label;
    truths += c.role == ColumnRole::TrueProb;
    if (c.role == ColumnRole::Feature && c.discretization != Discretization::None && c.buckets < 1) {
      throw Error("schema: column '" + c.name + "' needs a bucket count");
    }
  }
  if (predictions != 1) throw Error("schema: exactly one prediction column required");
  if (labels != 1) throw Error("schema: exactly one label column required");
  if (truths > 1) throw Error("schema: at most one true_prob column");
}

bool Schema::frozen() const {
  return std::all_of(columns.begin(), columns.end(),
                     [](const auto& c) { return c.role != ColumnRole::Feature || c.frozen; });
}

std::vector<std::string> Schema::feature_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.role == ColumnRole::Feature) out.push_back(c.name);
  }
  return out;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json j = {{"name", c.name}, {"role", to_string(c.role)}};
    if (c.role == ColumnRole::Feature) {
      j["discretization"] = c.discretization == Discretization::None
                                ? std::string("none")
                                : std::string(to_string(c.discretization)) + ":" + std::to_string(c.buckets);
      if (c.frozen) {
        j["frozen"] = true;
        if (c.discretization == Discretization::None) j["vocabulary"] = c.vocabulary;
        if (c.discretization == Discretization::Quantile) j["boundaries"] = c.boundaries;
      }
      if (c.range_lo) j["range"] = {*c.range_lo, *c.range_hi};
    }
    cols.push_back(std::move(j));
  }
  return {{"columns", cols}};
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  try {
    for (const auto& jc : j.at("columns")) {
      ColumnSpec c;
      c.name = jc.at("name").get<std::string>();
      c.role = parse_role(jc.value("role", std::string("feature")));
      parse_discretization(jc.value("discretization", std::string("none")), c);
      c.frozen = jc.value("frozen", false);
      if (jc.contains("vocabulary")) c.vocabulary = jc.at("vocabulary").get<std::vector<std::string>>();
      if (jc.contains("boundaries")) c.boundaries = jc.at("boundaries").get<std::vector<double>>();
      if (jc.contains("range")) {
        c.range_lo = jc.at("range").at(0).get<double>();
        c.range_hi = jc.at("range").at(1).get<double>();
      }
      s.columns.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

Schema Schema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schema '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("schema '" + path + "': " + e.what());
  }
  return from_json(j);
}

Schema Schema::from_header(const std::vector<std::string>& header) {
  Schema s;
  for (const auto& name : header) {
    ColumnSpec c;
    c.name = name;
    if (name == "prediction") c.role = ColumnRole::Prediction;
    else if (name == "label") c.role = ColumnRole::Label;
    else if (name == "true_prob") c.role = ColumnRole::TrueProb;
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (quoted) line_error(line_no, "unterminated quote");
    fields.push_back(std::move(cur));
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      line_error(line_no, "expected " + std::to_string(t.header.size()) + " fields, got " +
                              std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error("empty input: missing header row");
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::vector<double> quantile_boundaries(std::vector<double> values, std::uint32_t k) {
  if (values.empty() || k < 2) return {};
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (std::uint32_t j = 1; j < k; ++j) {
    const auto idx = static_cast<std::size_t>(static_cast<double>(j) * static_cast<double>(values.size()) / k);
    const double cut = values[std::min(idx, values.size() - 1)];
    if (cut > values.front() && (out.empty() || cut > out.back())) out.push_back(cut);
  }
  return out;
}

Dataset table_to_dataset(const CsvTable& table, Schema& schema) {
  schema.validate();
  std::vector<std::size_t> where(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto it = std::find(table.header.begin(), table.header.end(), schema.columns[c].name);
    if (it == table.header.end()) {
      if (schema.columns[c].role == ColumnRole::Ignore) {
        where[c] = SIZE_MAX;
        continue;
      }
      throw Error("schema mismatch: column '" + schema.columns[c].name + "' missing from header");
    }
    where[c] = static_cast<std::size_t>(it - table.header.begin());
  }

  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    auto& col = schema.columns[c];
    if (col.role != ColumnRole::Feature || col.frozen) continue;
    if (col.discretization == Discretization::None) {
      for (const auto& row : table.rows) {
        const auto& tok = row[where[c]];
        if (std::find(col.vocabulary.begin(), col.vocabulary.end(), tok) == col.vocabulary.end()) {
          col.vocabulary.push_back(tok);
        }
      }
    } else {
      std::vector<double> values;
      values.reserve(table.rows.size());
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        values.push_back(parse_real(table.rows[r][where[c]], table.line_numbers[r], col.name));
      }
      if (col.discretization == Discretization::Quantile) {
        col.boundaries = quantile_boundaries(values, col.buckets);
      } else if (!col.range_lo) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        col.range_lo = values.empty() ? 0.0 : *lo;
        col.range_hi = values.empty() ? 1.0 : *hi;
      }
    }
    col.frozen = true;
  }

  Dataset ds;
  for (const auto& col : schema.columns) {
    if (col.role != ColumnRole::Feature) continue;
    ds.feature_names.push_back(col.name);
    ds.feature_cardinalities.push_back(col.cardinality());
  }
  ds.samples.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    CalibrationSample s;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      if (col.role == ColumnRole::Ignore) continue;
      const auto& tok = row[where[c]];
      switch (col.role) {
        case ColumnRole::Feature:
          s.features.push_back(col.encode(tok, line));
          break;
        case ColumnRole::Prediction:
          s.prediction = parse_real(tok, line, col.name);
          if (s.prediction < 0.0 || s.prediction > 1.0) line_error(line, "prediction outside [0,1]");
          break;
        case ColumnRole::Label: {
          const double y = parse_real(tok, line, col.name);
          if (y != 0.0 && y != 1.0) line_error(line, "label must be 0 or 1, got '" + tok + "'");
          s.label = y;
          break;
        }
        case ColumnRole::TrueProb:
          s.true_prob = parse_real(tok, line, col.name);
          if (*s.true_prob < 0.0 || *s.true_prob > 1.0) line_error(line, "true_prob outside [0,1]");
          break;
        case ColumnRole::Ignore:
          break;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset ingest(const std::string& path, Schema& schema) {
  const auto table = read_csv(path);
  try {
    return table_to_dataset(table, schema);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace mbct
