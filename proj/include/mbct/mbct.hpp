#pragma once

// Multiple boosting calibration trees: feature-aware binning trees whose
// nodes carry a multiplicative scaler, grown greedily against the local
// multi-view calibration error and stacked while the global error drops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbct/calibrators.hpp"
#include "mbct/core.hpp"
#include "mbct/kernels.hpp"

namespace mbct {

struct MbctConfig {
  double alpha = 0.05;
  double e = 0.1;
  std::size_t max_depth = 5;
  std::size_t max_trees = 8;
  std::size_t r = 100;
  double p = 2.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> min_bin_size_override;
  /// Equal-width buckets of the running prediction offered as an extra split
  /// feature to every tree. 0 disables it.
  std::uint32_t prediction_buckets = 100;
  /// Fraction of rows held out to judge tree acceptance. 0 judges on the
  /// training rows themselves.
  double validation_fraction = 0.0;
  kernels::Exec exec = kernels::Exec::Parallel;

  void validate() const;
};

struct TreeNode {
  std::optional<std::size_t> split_feature;
  std::map<FeatureValue, std::size_t> children;  // feature value -> node index
  double scaler = 1.0;
  BinStats stats;  // training rows of the node, mean_prediction after scaling
  std::size_t depth = 0;
  double local_mvce_before = std::numeric_limits<double>::quiet_NaN();
  double local_mvce_after = std::numeric_limits<double>::quiet_NaN();

  bool is_leaf() const { return !split_feature.has_value(); }
};

struct CalibrationTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t depth = 0;

  /// Node reached by a row. Stops early at a split whose value was never
  /// seen in training. `prediction_bucket` feeds the virtual feature.
  std::size_t route(std::span<const FeatureValue> features, FeatureValue prediction_bucket,
                    std::size_t num_features) const;
  std::size_t leaf_count() const;
};

struct MbctModel {
  MbctConfig config;
  std::vector<CalibrationTree> trees;
  std::size_t min_bin_size = 0;
  bool min_bin_size_feasible = true;
  std::size_t num_features = 0;  // dataset columns; index num_features is the prediction bucket
  std::vector<std::string> feature_names;
  double initial_global_mvce = 0.0;
  std::vector<double> global_mvce_per_tree;

  std::size_t loss_bin_size() const { return std::max<std::size_t>(2, min_bin_size / 2); }
};

// --- minimum bin size ------------------------------------------------------

/// Whether a bin of c rows keeps the relative error bound within e:
///   mean <= (1/e) * (sqrt(2 V L / c) + 3 L / c),  L = ln(3 n / (c alpha)).
bool min_bin_size_holds(double mean_label, double variance, double n, double c, double alpha, double e);

struct MinBinSize {
  std::size_t value = 2;
  bool feasible = true;  // false when no c in [2, n/2] satisfies the bound
};

MinBinSize solve_min_bin_size(double mean_label, double variance, double n, double alpha, double e);
MinBinSize solve_min_bin_size(const Dataset& dataset, double alpha, double e);

// --- tree growth -----------------------------------------------------------

/// k = mean label / mean current prediction, capped so k * max(x) <= 1.
/// Returns 1 when the mean prediction is zero.
double fit_node_scaler(const Dataset& dataset, std::span<const std::size_t> indices,
                       std::span<const double> current_predictions);

struct SplitCandidate {
  std::size_t feature = 0;
  double mvce = 0.0;
};

/// Value of feature `feature` for row `row`; the index past the dataset
/// columns is the bucket of the row's current prediction.
FeatureValue feature_value(const Dataset& dataset, std::size_t row, std::size_t feature,
                           std::span<const double> current_predictions, std::uint32_t prediction_buckets);

/// Local MVCE of the node when every row is scaled by `scalers[group_of[i]]`.
double local_mvce(const Dataset& dataset, std::span<const std::size_t> indices,
                  std::span<const double> current_predictions, std::span<const std::size_t> group_of,
                  std::span<const double> scalers, const kernels::ShuffledDivisions& divisions, double p,
                  kernels::Exec exec);

/// Best feature to split the node on: the one whose split-and-recalibrate
/// gives the lowest local MVCE (ties to the lowest index). Only features
/// that produce >= 2 groups, each weighing at least `min_child_weight`,
/// are candidates.
std::optional<SplitCandidate> select_split_feature(const Dataset& dataset, std::span<const std::size_t> indices,
                                                   std::span<const double> current_predictions,
                                                   const MbctConfig& config, std::size_t loss_bin_size,
                                                   std::uint64_t division_seed, double min_child_weight = 0.0);

CalibrationTree grow_tree(const Dataset& dataset, std::span<const std::size_t> rows,
                          std::span<const double> current_predictions, const MbctConfig& config,
                          std::size_t min_bin_size, std::size_t tree_index);

MbctModel fit_mbct(const Dataset& dataset, const MbctConfig& config);

/// One tree step: x -> min(1, x * k(node reached)).
double apply_tree(const CalibrationTree& tree, const MbctModel& model, double current,
                  std::span<const FeatureValue> features);
double apply_mbct(const MbctModel& model, double prediction, std::span<const FeatureValue> features);
std::vector<double> apply_mbct(const MbctModel& model, const Dataset& dataset, std::size_t max_trees = SIZE_MAX);

/// Training rows grouped by the node of `tree_index` they reach.
std::vector<IndexList> mbct_node_bins(const MbctModel& model, const Dataset& dataset, std::size_t tree_index);

nlohmann::json mbct_to_json(const MbctModel& model);
MbctModel mbct_from_json(const nlohmann::json& j);

// --- rule export -----------------------------------------------------------

struct RuleCondition {
  std::size_t feature = 0;  // == num_features for the prediction bucket
  FeatureValue value = 0;
};

struct Rule {
  std::vector<RuleCondition> conditions;  // conjunction, root to node order
  double multiplier = 1.0;
};

struct TreeRules {
  std::vector<Rule> rules;      // one per leaf
  std::vector<Rule> fallbacks;  // internal nodes, deepest first; used when no rule matches
};

struct RuleSet {
  std::vector<std::string> feature_names;
  std::uint32_t prediction_buckets = 100;
  std::vector<TreeRules> trees;

  std::size_t rule_count() const;
  double apply(double prediction, std::span<const FeatureValue> features) const;
};

RuleSet export_rules(const MbctModel& model);
std::string format_rules(const RuleSet& rules);
RuleSet parse_rules(std::string_view text);

class MbctCalibrator final : public Calibrator {
 public:
  explicit MbctCalibrator(MbctConfig config = {}) : model_{} { model_.config = config; }
  explicit MbctCalibrator(MbctModel model) : model_(std::move(model)) {}

  std::string_view kind() const override { return "mbct"; }
  void fit(const Dataset& dataset) override { model_ = fit_mbct(dataset, model_.config); }
  double apply(double prediction, std::span<const FeatureValue> features) const override {
    return apply_mbct(model_, prediction, features);
  }
  nlohmann::json to_json() const override { return mbct_to_json(model_); }
  const MbctModel& model() const { return model_; }

 private:
  MbctModel model_;
};

}  // namespace mbct
