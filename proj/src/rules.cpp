#include <algorithm>
#include <charconv>
#include <sstream>
#include <string>
#include <string_view>

#include "mbct/mbct.hpp"

namespace mbct {

namespace {

constexpr std::string_view kRulesMagic = "MBCT-RULES 1";
constexpr std::string_view kBucketName = "@prediction_bucket";

void collect(const CalibrationTree& tree, std::size_t node, std::vector<RuleCondition>& path, TreeRules& out,
             std::vector<std::pair<std::size_t, Rule>>& internal) {
  const auto& n = tree.nodes[node];
  if (n.is_leaf()) {
    out.rules.push_back({path, n.scaler});
    return;
  }
  internal.emplace_back(n.depth, Rule{path, n.scaler});
  for (const auto& [value, child] : n.children) {
    path.push_back({*n.split_feature, value});
    collect(tree, child, path, out, internal);
    path.pop_back();
  }
}

bool matches(const Rule& rule, std::span<const FeatureValue> features, FeatureValue bucket) {
  for (const auto& c : rule.conditions) {
    const FeatureValue v = c.feature < features.size() ? features[c.feature] : bucket;
    if (v != c.value) return false;
  }
  return true;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw Error("rules line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view token, std::size_t line) {
  T value{};
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    parse_error(line, "bad number '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::size_t RuleSet::rule_count() const {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.rules.size();
  return n;
}

double RuleSet::apply(double prediction, std::span<const FeatureValue> features) const {
  const std::size_t num_features = feature_names.size() - (prediction_buckets > 0 ? 1 : 0);
  if (features.size() != num_features) throw Error("schema mismatch: expected " + std::to_string(num_features) +
                                                   " features");
  double current = std::clamp(prediction, 0.0, 1.0);
  for (const auto& tree : trees) {
    const auto bucket = prediction_bucket(current, prediction_buckets);
    const Rule* hit = nullptr;
    for (const auto& r : tree.rules) {
      if (matches(r, features, bucket)) {
        hit = &r;
        break;
      }
    }
    if (!hit) {
      for (const auto& r : tree.fallbacks) {
        if (matches(r, features, bucket)) {
          hit = &r;
          break;
        }
      }
    }
    if (hit) current = std::min(1.0, current * hit->multiplier);
  }
  return current;
}

RuleSet export_rules(const MbctModel& model) {
  RuleSet out;
  out.feature_names = model.feature_names;
  out.feature_names.resize(model.num_features);
  for (std::size_t f = 0; f < model.num_features; ++f) {
    if (out.feature_names[f].empty()) out.feature_names[f] = "f" + std::to_string(f);
  }
  out.prediction_buckets = model.config.prediction_buckets;
  if (out.prediction_buckets > 0) out.feature_names.emplace_back(kBucketName);
  for (const auto& tree : model.trees) {
    TreeRules tr;
    std::vector<RuleCondition> path;
    std::vector<std::pair<std::size_t, Rule>> internal;
    collect(tree, 0, path, tr, internal);
    std::stable_sort(internal.begin(), internal.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto& [depth, rule] : internal) tr.fallbacks.push_back(std::move(rule));
    out.trees.push_back(std::move(tr));
  }
  return out;
}

std::string format_rules(const RuleSet& rules) {
  std::ostringstream os;
  os << kRulesMagic << '\n';
  os << "prediction_buckets " << rules.prediction_buckets << '\n';
  os << "features " << rules.feature_names.size() << '\n';
  for (std::size_t f = 0; f < rules.feature_names.size(); ++f) {
    os << "feature " << f << ' ' << rules.feature_names[f] << '\n';
  }
  os << "trees " << rules.trees.size() << '\n';
  auto emit = [&os](std::string_view tag, const Rule& r) {
    os << tag;
    if (r.conditions.empty()) {
      os << " TRUE";
    } else {
      for (std::size_t c = 0; c < r.conditions.size(); ++c) {
        os << (c == 0 ? " " : " & ") << 'f' << r.conditions[c].feature << '=' << r.conditions[c].value;
      }
    }
    os << " => " << format_double(r.multiplier) << '\n';
  };
  for (std::size_t t = 0; t < rules.trees.size(); ++t) {
    const auto& tr = rules.trees[t];
    os << "tree " << t << " rules " << tr.rules.size() << " fallbacks " << tr.fallbacks.size() << '\n';
    for (const auto& r : tr.rules) emit("rule", r);
    for (const auto& r : tr.fallbacks) emit("fallback", r);
  }
  return os.str();
}

RuleSet parse_rules(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  std::size_t at = 0;
  auto next = [&](std::string_view expect) {
    if (at >= lines.size()) parse_error(at + 1, "unexpected end of file, expected '" + std::string(expect) + "'");
    return lines[at++];
  };
  if (next(kRulesMagic) != kRulesMagic) parse_error(1, "missing header 'MBCT-RULES 1'");

  RuleSet out;
  auto keyed = [&](std::string_view key) {
    const auto line = next(key);
    const auto tok = split_ws(line);
    if (tok.size() != 2 || tok[0] != key) parse_error(at, "expected '" + std::string(key) + " <n>'");
    return parse_number<std::size_t>(tok[1], at);
  };
  out.prediction_buckets = static_cast<std::uint32_t>(keyed("prediction_buckets"));
  const std::size_t n_features = keyed("features");
  for (std::size_t f = 0; f < n_features; ++f) {
    const auto line = next("feature");
    const auto tok = split_ws(line);
    if (tok.size() < 3 || tok[0] != "feature" || parse_number<std::size_t>(tok[1], at) != f) {
      parse_error(at, "expected 'feature " + std::to_string(f) + " <name>'");
    }
    const auto name_start = static_cast<std::size_t>(tok[2].data() - line.data());
    out.feature_names.emplace_back(line.substr(name_start));
  }
  if (out.prediction_buckets > 0 && (out.feature_names.empty() || out.feature_names.back() != kBucketName)) {
    parse_error(at, "last feature must be " + std::string(kBucketName) + " when prediction buckets are used");
  }

  auto parse_rule = [&](std::string_view tag) {
    const auto line = next(tag);
    const auto tok = split_ws(line);
    if (tok.size() < 4 || tok[0] != tag) parse_error(at, "expected '" + std::string(tag) + " ... => <k>'");
    if (tok[tok.size() - 2] != "=>") parse_error(at, "missing '=>'");
    Rule r;
    r.multiplier = parse_number<double>(tok.back(), at);
    if (!(r.multiplier >= 0.0)) parse_error(at, "multiplier must be non-negative");
    const std::size_t cond_end = tok.size() - 2;
    if (cond_end == 2 && tok[1] == "TRUE") return r;
    for (std::size_t i = 1; i < cond_end; ++i) {
      if (i % 2 == 0) {
        if (tok[i] != "&") parse_error(at, "expected '&' between conditions");
        continue;
      }
      const auto eq = tok[i].find('=');
      if (tok[i].size() < 4 || tok[i][0] != 'f' || eq == std::string_view::npos) {
        parse_error(at, "bad condition '" + std::string(tok[i]) + "'");
      }
      RuleCondition c;
      c.feature = parse_number<std::size_t>(tok[i].substr(1, eq - 1), at);
      c.value = parse_number<FeatureValue>(tok[i].substr(eq + 1), at);
      if (c.feature >= out.feature_names.size()) parse_error(at, "feature index out of range");
      r.conditions.push_back(c);
    }
    if (cond_end % 2 != 0) parse_error(at, "dangling '&'");
    return r;
  };

  const std::size_t n_trees = keyed("trees");
  for (std::size_t t = 0; t < n_trees; ++t) {
    const auto tok = split_ws(next("tree"));
    if (tok.size() != 6 || tok[0] != "tree" || tok[2] != "rules" || tok[4] != "fallbacks" ||
        parse_number<std::size_t>(tok[1], at) != t) {
      parse_error(at, "expected 'tree " + std::to_string(t) + " rules <n> fallbacks <m>'");
    }
    TreeRules tr;
    const auto n_rules = parse_number<std::size_t>(tok[3], at);
    const auto n_fallbacks = parse_number<std::size_t>(tok[5], at);
    for (std::size_t i = 0; i < n_rules; ++i) tr.rules.push_back(parse_rule("rule"));
    for (std::size_t i = 0; i < n_fallbacks; ++i) tr.fallbacks.push_back(parse_rule("fallback"));
    out.trees.push_back(std::move(tr));
  }
  if (at != lines.size()) parse_error(at + 1, "trailing content");
  return out;
}

}  // namespace mbct
