#include "mbct/mbct.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include "mbct/metrics.hpp"

namespace mbct {

void MbctConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("mbct config: alpha must lie in (0,1)");
  if (!(e > 0.0)) throw Error("mbct config: e must be positive");
  if (max_trees < 1) throw Error("mbct config: max_trees must be >= 1");
  if (r < 1) throw Error("mbct config: r must be >= 1");
  if (!(p >= 1.0)) throw Error("mbct config: p must be >= 1");
  if (min_bin_size_override && *min_bin_size_override < 2) throw Error("mbct config: min bin size must be >= 2");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw Error("mbct config: validation_fraction must lie in [0,1)");
  }
}

// --- minimum bin size ------------------------------------------------------

bool min_bin_size_holds(double mean_label, double variance, double n, double c, double alpha, double e) {
  const double log_term = std::max(0.0, std::log(3.0 * n / (c * alpha)));
  const double bound = std::sqrt(2.0 * variance * log_term / c) + 3.0 * log_term / c;
  return mean_label <= bound / e;
}

MinBinSize solve_min_bin_size(double mean_label, double variance, double n, double alpha, double e) {
  if (!(mean_label > 0.0)) throw Error("degenerate label mean");
  const auto cap = static_cast<std::size_t>(std::floor(n / 2.0));
  if (cap < 2 || !min_bin_size_holds(mean_label, variance, n, 2.0, alpha, e)) return {2, false};
  if (min_bin_size_holds(mean_label, variance, n, static_cast<double>(cap), alpha, e)) return {cap, true};
  // The right-hand side decreases in c: holds at lo, fails at hi.
  std::size_t lo = 2, hi = cap;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (min_bin_size_holds(mean_label, variance, n, static_cast<double>(mid), alpha, e)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, true};
}

MinBinSize solve_min_bin_size(const Dataset& dataset, double alpha, double e) {
  if (dataset.empty()) throw Error("min bin size: empty dataset");
  IndexList all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto stats = compute_bin_stats(dataset, all);
  return solve_min_bin_size(stats.mean_label, stats.label_variance, stats.count, alpha, e);
}

// --- node scalers and local loss -------------------------------------------

double fit_node_scaler(const Dataset& dataset, std::span<const std::size_t> indices,
                       std::span<const double> current_predictions) {
  if (indices.empty()) throw Error("empty bin");
  double w = 0.0, wy = 0.0, wx = 0.0, x_max = 0.0;
  for (auto i : indices) {
    const auto& s = dataset.samples[i];
    w += s.weight;
    wy += s.weight * s.label;
    wx += s.weight * current_predictions[i];
    x_max = std::max(x_max, current_predictions[i]);
  }
  if (!(wx > 0.0)) return 1.0;
  double k = (wy / w) / (wx / w);
  if (x_max > 0.0 && k * x_max > 1.0) k = 1.0 / x_max;
  return k;
}

FeatureValue feature_value(const Dataset& dataset, std::size_t row, std::size_t feature,
                           std::span<const double> current_predictions, std::uint32_t prediction_buckets) {
  if (feature < dataset.num_features()) return dataset.samples[row].features[feature];
  return prediction_bucket(current_predictions[row], prediction_buckets);
}

double local_mvce(const Dataset& dataset, std::span<const std::size_t> indices,
                  std::span<const double> current_predictions, std::span<const std::size_t> group_of,
                  std::span<const double> scalers, const kernels::ShuffledDivisions& divisions, double p,
                  kernels::Exec exec) {
  kernels::Residuals res;
  res.weighted.resize(indices.size());
  res.weight.resize(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& s = dataset.samples[indices[j]];
    const double calibrated = std::min(1.0, current_predictions[indices[j]] * scalers[group_of[j]]);
    res.weight[j] = s.weight;
    res.weighted[j] = s.weight * (calibrated - s.label);
  }
  const auto per_division = kernels::division_mean_pce(divisions, res, exec);
  return kernels::power_mean(per_division, p);
}

namespace {

std::size_t candidate_count(const Dataset& dataset, const MbctConfig& config) {
  return dataset.num_features() + (config.prediction_buckets > 0 ? 1 : 0);
}

struct Grouping {
  std::vector<FeatureValue> values;     // value of each group, ascending
  std::vector<std::size_t> group_of;    // per node position
  std::vector<IndexList> members;       // dataset rows per group
};

Grouping group_rows(const Dataset& dataset, std::span<const std::size_t> indices, std::size_t feature,
                    std::span<const double> current, std::uint32_t buckets) {
  std::map<FeatureValue, std::size_t> slot;
  std::vector<FeatureValue> raw(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    raw[j] = feature_value(dataset, indices[j], feature, current, buckets);
    slot.emplace(raw[j], 0);
  }
  Grouping g;
  for (auto& [value, id] : slot) {
    id = g.values.size();
    g.values.push_back(value);
  }
  g.members.resize(g.values.size());
  g.group_of.resize(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    g.group_of[j] = slot[raw[j]];
    g.members[g.group_of[j]].push_back(indices[j]);
  }
  return g;
}

double group_weight(const Dataset& dataset, const IndexList& rows) {
  double w = 0.0;
  for (auto i : rows) w += dataset.samples[i].weight;
  return w;
}

struct NodeEvaluation {
  double before = 0.0;
  std::optional<SplitCandidate> best;
};

NodeEvaluation evaluate_node(const Dataset& dataset, std::span<const std::size_t> indices,
                             std::span<const double> current, const MbctConfig& config, std::size_t loss_bin_size,
                             std::uint64_t division_seed, double min_child_weight) {
  Rng rng(division_seed);
  std::vector<std::uint64_t> seeds(config.r);
  for (auto& s : seeds) s = rng.next_u64();
  const kernels::ShuffledDivisions divisions(indices.size(), loss_bin_size, seeds, config.exec);

  NodeEvaluation out;
  {
    const std::vector<std::size_t> one_group(indices.size(), 0);
    const double k = fit_node_scaler(dataset, indices, current);
    out.before = local_mvce(dataset, indices, current, one_group, std::span<const double>(&k, 1), divisions,
                            config.p, config.exec);
  }

  const std::size_t count = candidate_count(dataset, config);
  std::vector<double> score(count, std::numeric_limits<double>::infinity());
  std::vector<char> valid(count, 0);
  const auto n_candidates = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic) if (config.exec == kernels::Exec::Parallel)
  for (std::ptrdiff_t f = 0; f < n_candidates; ++f) {
    const auto fu = static_cast<std::size_t>(f);
    const auto g = group_rows(dataset, indices, fu, current, config.prediction_buckets);
    if (g.values.size() < 2) continue;
    bool small_child = false;
    for (const auto& rows : g.members) small_child |= group_weight(dataset, rows) < min_child_weight;
    if (small_child) continue;
    std::vector<double> scalers(g.members.size());
    for (std::size_t c = 0; c < g.members.size(); ++c) scalers[c] = fit_node_scaler(dataset, g.members[c], current);
    score[fu] = local_mvce(dataset, indices, current, g.group_of, scalers, divisions, config.p, kernels::Exec::Serial);
    valid[fu] = 1;
  }
  for (std::size_t f = 0; f < count; ++f) {
    if (valid[f] && (!out.best || score[f] < out.best->mvce)) out.best = SplitCandidate{f, score[f]};
  }
  return out;
}

std::uint64_t node_seed(const MbctConfig& config, std::size_t tree_index, std::size_t node_index) {
  return Rng(config.seed).derive(tree_index + 1, node_index).seed();
}

BinStats scaled_stats(const Dataset& dataset, const IndexList& rows, std::span<const double> current, double k) {
  double w = 0.0, wy = 0.0, wp = 0.0;
  for (auto i : rows) {
    const auto& s = dataset.samples[i];
    w += s.weight;
    wy += s.weight * s.label;
    wp += s.weight * std::min(1.0, current[i] * k);
  }
  auto stats = compute_bin_stats(dataset, rows);
  stats.mean_prediction = wp / w;
  return stats;
}

}  // namespace

std::optional<SplitCandidate> select_split_feature(const Dataset& dataset, std::span<const std::size_t> indices,
                                                   std::span<const double> current_predictions,
                                                   const MbctConfig& config, std::size_t loss_bin_size,
                                                   std::uint64_t division_seed, double min_child_weight) {
  if (loss_bin_size < 1 || indices.size() < 2 * loss_bin_size) return std::nullopt;
  return evaluate_node(dataset, indices, current_predictions, config, loss_bin_size, division_seed, min_child_weight)
      .best;
}

// --- trees -----------------------------------------------------------------

std::size_t CalibrationTree::route(std::span<const FeatureValue> features, FeatureValue prediction_bucket,
                                   std::size_t num_features) const {
  std::size_t node = 0;
  while (!nodes[node].is_leaf()) {
    const std::size_t f = *nodes[node].split_feature;
    const FeatureValue v = f < num_features ? features[f] : prediction_bucket;
    const auto it = nodes[node].children.find(v);
    if (it == nodes[node].children.end()) break;
    node = it->second;
  }
  return node;
}

std::size_t CalibrationTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

CalibrationTree grow_tree(const Dataset& dataset, std::span<const std::size_t> rows,
                          std::span<const double> current_predictions, const MbctConfig& config,
                          std::size_t min_bin_size, std::size_t tree_index) {
  if (current_predictions.size() != dataset.size()) throw Error("grow_tree: predictions not aligned with dataset");
  if (rows.empty()) throw Error("grow_tree: no rows");
  const std::size_t loss_bin_size = std::max<std::size_t>(2, min_bin_size / 2);
  const auto beta = static_cast<double>(min_bin_size);

  CalibrationTree tree;
  struct Pending {
    std::size_t node;
    IndexList rows;
  };
  std::deque<Pending> queue;
  {
    IndexList root_rows(rows.begin(), rows.end());
    TreeNode root;
    root.scaler = fit_node_scaler(dataset, root_rows, current_predictions);
    root.stats = scaled_stats(dataset, root_rows, current_predictions, root.scaler);
    tree.nodes.push_back(std::move(root));
    queue.push_back({0, std::move(root_rows)});
  }

  while (!queue.empty()) {
    Pending item = std::move(queue.front());
    queue.pop_front();
    const std::size_t depth = tree.nodes[item.node].depth;
    if (depth >= config.max_depth) continue;
    if (item.rows.size() < 2 * loss_bin_size || group_weight(dataset, item.rows) < 2.0 * beta) continue;

    const auto eval = evaluate_node(dataset, item.rows, current_predictions, config, loss_bin_size,
                                    node_seed(config, tree_index, item.node), beta);
    tree.nodes[item.node].local_mvce_before = eval.before;
    if (!eval.best) continue;
    tree.nodes[item.node].local_mvce_after = eval.best->mvce;
    if (!(eval.best->mvce < eval.before)) continue;

    const std::size_t feature = eval.best->feature;
    auto groups = group_rows(dataset, item.rows, feature, current_predictions, config.prediction_buckets);
    tree.nodes[item.node].split_feature = feature;
    for (std::size_t c = 0; c < groups.values.size(); ++c) {
      TreeNode child;
      child.depth = depth + 1;
      child.scaler = fit_node_scaler(dataset, groups.members[c], current_predictions);
      child.stats = scaled_stats(dataset, groups.members[c], current_predictions, child.scaler);
      const std::size_t id = tree.nodes.size();
      tree.nodes.push_back(std::move(child));
      tree.nodes[item.node].children.emplace(groups.values[c], id);
      tree.depth = std::max(tree.depth, depth + 1);
      queue.push_back({id, std::move(groups.members[c])});
    }
  }
  return tree;
}

double apply_tree(const CalibrationTree& tree, const MbctModel& model, double current,
                  std::span<const FeatureValue> features) {
  const auto bucket = prediction_bucket(current, model.config.prediction_buckets);
  const auto node = tree.route(features, bucket, model.num_features);
  return std::min(1.0, current * tree.nodes[node].scaler);
}

double apply_mbct(const MbctModel& model, double prediction, std::span<const FeatureValue> features) {
  if (features.size() != model.num_features) throw Error("schema mismatch: expected " +
                                                          std::to_string(model.num_features) + " features");
  double current = std::clamp(prediction, 0.0, 1.0);
  for (const auto& tree : model.trees) current = apply_tree(tree, model, current, features);
  return current;
}

std::vector<double> apply_mbct(const MbctModel& model, const Dataset& dataset, std::size_t max_trees) {
  std::vector<double> out(dataset.size());
  const std::size_t trees = std::min(max_trees, model.trees.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (s.features.size() != model.num_features) throw Error("schema mismatch: row " + std::to_string(i));
    double current = std::clamp(s.prediction, 0.0, 1.0);
    for (std::size_t t = 0; t < trees; ++t) current = apply_tree(model.trees[t], model, current, s.features);
    out[i] = current;
  }
  return out;
}

std::vector<IndexList> mbct_node_bins(const MbctModel& model, const Dataset& dataset, std::size_t tree_index) {
  if (tree_index >= model.trees.size()) throw Error("mbct: tree index out of range");
  const auto before = apply_mbct(model, dataset, tree_index);
  const auto& tree = model.trees[tree_index];
  std::vector<IndexList> bins(tree.nodes.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto bucket = prediction_bucket(before[i], model.config.prediction_buckets);
    bins[tree.route(dataset.samples[i].features, bucket, model.num_features)].push_back(i);
  }
  return bins;
}

// --- boosting --------------------------------------------------------------

MbctModel fit_mbct(const Dataset& dataset, const MbctConfig& config) {
  config.validate();
  dataset.validate();
  if (dataset.empty()) throw Error("mbct: empty dataset");

  MbctModel model;
  model.config = config;
  model.num_features = dataset.num_features();
  model.feature_names = dataset.feature_names;
  if (config.min_bin_size_override) {
    model.min_bin_size = *config.min_bin_size_override;
  } else {
    const auto solved = solve_min_bin_size(dataset, config.alpha, config.e);
    model.min_bin_size = solved.value;
    model.min_bin_size_feasible = solved.feasible;
  }

  IndexList all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  IndexList train = all, judge = all;
  if (config.validation_fraction > 0.0) {
    Rng split_rng = Rng(config.seed).derive(0x7661'6c69'6461'7465ULL);
    split_rng.shuffle(std::span<std::size_t>(all));
    const auto held = static_cast<std::size_t>(config.validation_fraction * static_cast<double>(all.size()));
    judge.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(held));
    train.assign(all.begin() + static_cast<std::ptrdiff_t>(held), all.end());
    std::sort(judge.begin(), judge.end());
    std::sort(train.begin(), train.end());
  }
  const std::size_t loss_bin_size = model.loss_bin_size();
  if (group_weight(dataset, train) < 2.0 * static_cast<double>(model.min_bin_size)) {
    throw Error("mbct: dataset smaller than twice the minimum bin size (" + std::to_string(model.min_bin_size) + ")");
  }
  if (judge.size() < 2 * loss_bin_size) throw Error("mbct: too few rows to evaluate the global loss");

  std::vector<double> current(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) current[i] = std::clamp(dataset.samples[i].prediction, 0.0, 1.0);

  // The global loss reuses one set of divisions so successive trees are
  // compared on identical partitions.
  Rng global_rng = Rng(config.seed).derive(0x676c'6f62'616cULL);
  std::vector<std::uint64_t> global_seeds(config.r);
  for (auto& s : global_seeds) s = global_rng.next_u64();
  auto global_loss = [&](std::span<const double> calibrated) {
    kernels::Residuals res;
    res.weighted.resize(judge.size());
    res.weight.resize(judge.size());
    for (std::size_t j = 0; j < judge.size(); ++j) {
      const auto& s = dataset.samples[judge[j]];
      res.weight[j] = s.weight;
      res.weighted[j] = s.weight * (calibrated[judge[j]] - s.label);
    }
    return kernels::power_mean(kernels::shuffled_division_mean_pce(res, loss_bin_size, global_seeds, config.exec),
                               config.p);
  };

  model.initial_global_mvce = global_loss(current);
  double previous = model.initial_global_mvce;
  std::vector<double> next(dataset.size());
  for (std::size_t t = 0; t < config.max_trees; ++t) {
    auto tree = grow_tree(dataset, train, current, config, model.min_bin_size, t);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      next[i] = apply_tree(tree, model, current[i], dataset.samples[i].features);
    }
    const double loss = global_loss(next);
    if (!(loss < previous)) break;
    model.trees.push_back(std::move(tree));
    model.global_mvce_per_tree.push_back(loss);
    previous = loss;
    current.swap(next);
  }
  return model;
}

// --- serialization ---------------------------------------------------------

namespace {

nlohmann::json nan_to_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double null_to_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::json mbct_to_json(const MbctModel& model) {
  const auto& c = model.config;
  nlohmann::json config = {{"alpha", c.alpha},
                           {"e", c.e},
                           {"max_depth", c.max_depth},
                           {"max_trees", c.max_trees},
                           {"r", c.r},
                           {"p", c.p},
                           {"seed", c.seed},
                           {"prediction_buckets", c.prediction_buckets},
                           {"validation_fraction", c.validation_fraction}};
  config["min_bin_size_override"] =
      c.min_bin_size_override ? nlohmann::json(*c.min_bin_size_override) : nlohmann::json(nullptr);
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
      nlohmann::json children = nlohmann::json::array();
      for (const auto& [value, id] : n.children) children.push_back({value, id});
      nodes.push_back({{"split_feature", n.split_feature ? nlohmann::json(*n.split_feature) : nlohmann::json(nullptr)},
                       {"children", children},
                       {"scaler", n.scaler},
                       {"depth", n.depth},
                       {"stats", {n.stats.count, n.stats.mean_label, n.stats.mean_prediction, n.stats.label_variance}},
                       {"local_mvce_before", nan_to_null(n.local_mvce_before)},
                       {"local_mvce_after", nan_to_null(n.local_mvce_after)}});
    }
    trees.push_back({{"depth", tree.depth}, {"nodes", nodes}});
  }
  return {{"kind", "mbct"},
          {"config", config},
          {"min_bin_size", model.min_bin_size},
          {"min_bin_size_feasible", model.min_bin_size_feasible},
          {"num_features", model.num_features},
          {"feature_names", model.feature_names},
          {"initial_global_mvce", model.initial_global_mvce},
          {"global_mvce_per_tree", model.global_mvce_per_tree},
          {"trees", trees}};
}

MbctModel mbct_from_json(const nlohmann::json& j) {
  MbctModel model;
  const auto& c = j.at("config");
  model.config.alpha = c.at("alpha").get<double>();
  model.config.e = c.at("e").get<double>();
  model.config.max_depth = c.at("max_depth").get<std::size_t>();
  model.config.max_trees = c.at("max_trees").get<std::size_t>();
  model.config.r = c.at("r").get<std::size_t>();
  model.config.p = c.at("p").get<double>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  model.config.prediction_buckets = c.at("prediction_buckets").get<std::uint32_t>();
  model.config.validation_fraction = c.at("validation_fraction").get<double>();
  if (!c.at("min_bin_size_override").is_null()) {
    model.config.min_bin_size_override = c.at("min_bin_size_override").get<std::size_t>();
  }
  model.min_bin_size = j.at("min_bin_size").get<std::size_t>();
  model.min_bin_size_feasible = j.at("min_bin_size_feasible").get<bool>();
  model.num_features = j.at("num_features").get<std::size_t>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  model.initial_global_mvce = j.at("initial_global_mvce").get<double>();
  model.global_mvce_per_tree = j.at("global_mvce_per_tree").get<std::vector<double>>();
  for (const auto& jt : j.at("trees")) {
    CalibrationTree tree;
    tree.depth = jt.at("depth").get<std::size_t>();
    for (const auto& jn : jt.at("nodes")) {
      TreeNode n;
      if (!jn.at("split_feature").is_null()) n.split_feature = jn.at("split_feature").get<std::size_t>();
      for (const auto& child : jn.at("children")) {
        n.children.emplace(child.at(0).get<FeatureValue>(), child.at(1).get<std::size_t>());
      }
      n.scaler = jn.at("scaler").get<double>();
      n.depth = jn.at("depth").get<std::size_t>();
      const auto& st = jn.at("stats");
      n.stats = {st.at(0).get<double>(), st.at(1).get<double>(), st.at(2).get<double>(), st.at(3).get<double>()};
      n.local_mvce_before = null_to_nan(jn.at("local_mvce_before"));
      n.local_mvce_after = null_to_nan(jn.at("local_mvce_after"));
      tree.nodes.push_back(std::move(n));
    }
    for (const auto& n : tree.nodes) {
      for (const auto& [value, id] : n.children) {
        if (id >= tree.nodes.size()) throw Error("mbct model: child index out of range");
      }
    }
    if (tree.nodes.empty()) throw Error("mbct model: tree without nodes");
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace mbct
