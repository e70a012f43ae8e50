#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mbct/analysis.hpp"
#include "mbct/mbct.hpp"
#include "mbct/metrics.hpp"
#include "mbct/sim.hpp"
#include "oracles.hpp"

using namespace mbct;

namespace {

IndexList all_rows(std::size_t n) {
  IndexList idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Dataset two_group(std::size_t n, std::uint64_t seed, std::size_t noise = 2) {
  Rng rng(seed);
  FeatureBiasOptions o;
  o.bias_features = {{{0, 1.3}, {1, 0.7}}};
  o.noise_features = noise;
  o.prediction_lo = 0.25;
  o.prediction_hi = 0.6;
  return synthetic_feature_bias_dataset(n, o, rng);
}

MbctConfig small_config(std::size_t beta) {
  MbctConfig cfg;
  cfg.min_bin_size_override = beta;
  cfg.r = 30;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("min bin size matches the scan oracle") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const double mean = 0.01 + 0.5 * rng.uniform();
    const double var = mean * (1 - mean);
    const double n = static_cast<double>(200 + rng.below(20000));
    const double alpha = 0.01 + 0.2 * rng.uniform();
    const double e = 0.05 + 0.5 * rng.uniform();
    const auto got = solve_min_bin_size(mean, var, n, alpha, e);
    const auto scan = oracle::min_bin_size_scan(mean, var, n, alpha, e);
    if (scan) {
      CHECK(got.feasible);
      CHECK(got.value == *scan);
    } else {
      CHECK(!got.feasible);
      CHECK(got.value == 2);
    }
  }
}

TEST_CASE("min bin size is monotone in e and capped") {
  const double mean = 0.1, var = 0.09, n = 50000;
  std::size_t prev = SIZE_MAX;
  for (double e = 0.02; e < 2; e *= 1.3) {
    const auto c = solve_min_bin_size(mean, var, n, 0.05, e);
    CHECK(c.value <= prev);
    prev = c.value;
  }
  // A tiny tolerance admits every c up to half the data; a huge one admits none.
  CHECK(solve_min_bin_size(mean, var, n, 0.05, 1e-9).value == 25000);
  const auto none = solve_min_bin_size(mean, var, n, 0.05, 1e9);
  CHECK(none.value == 2);
  CHECK(!none.feasible);
  CHECK_THROWS_WITH(solve_min_bin_size(0.0, 0.0, n, 0.05, 0.1), doctest::Contains("degenerate label mean"));
}

TEST_CASE("node scaler") {
  Dataset ds;
  for (double x : {0.04, 0.06}) {
    CalibrationSample s;
    s.prediction = x;
    s.label = 0.06;  // aggregated-style label
    ds.samples.push_back(s);
  }
  const auto preds = ds.predictions();
  CHECK(fit_node_scaler(ds, all_rows(2), preds) == doctest::Approx(1.2));

  Dataset cal;
  for (double x : {0.2, 0.4}) {
    CalibrationSample s;
    s.prediction = x;
    s.label = x;
    cal.samples.push_back(s);
  }
  CHECK(fit_node_scaler(cal, all_rows(2), cal.predictions()) == doctest::Approx(1.0));

  Dataset clamp;
  for (auto [x, y] : {std::pair{0.9, 1.0}, std::pair{0.1, 0.2}}) {
    CalibrationSample s;
    s.prediction = x;
    s.label = y;
    clamp.samples.push_back(s);
  }
  // Raw ratio 0.6 / 0.5 = 1.2, capped at 1 / 0.9.
  CHECK(fit_node_scaler(clamp, all_rows(2), clamp.predictions()) == doctest::Approx(1 / 0.9));

  Dataset zero;
  CalibrationSample z;
  z.prediction = 0;
  z.label = 1;
  zero.samples.push_back(z);
  CHECK(fit_node_scaler(zero, all_rows(1), zero.predictions()) == 1.0);
}

TEST_CASE("split selection") {
  const auto ds = two_group(20000, 3);
  const auto preds = ds.predictions();
  MbctConfig cfg = small_config(1000);
  cfg.prediction_buckets = 0;
  const auto pick = select_split_feature(ds, all_rows(ds.size()), preds, cfg, 500, 77);
  REQUIRE(pick);
  CHECK(pick->feature == 0);

  // Duplicate the bias column: the lower index wins the tie.
  Dataset dup = ds;
  dup.feature_names = {"noise", "bias", "bias_copy"};
  dup.feature_cardinalities = {3, 2, 2};
  for (auto& s : dup.samples) s.features = {s.features[1], s.features[0], s.features[0]};
  const auto dpick = select_split_feature(dup, all_rows(dup.size()), dup.predictions(), cfg, 500, 77);
  REQUIRE(dpick);
  CHECK(dpick->feature == 1);

  // Constant features cannot split.
  Dataset flat = ds;
  for (auto& s : flat.samples) s.features = {0, 0, 0};
  CHECK(!select_split_feature(flat, all_rows(flat.size()), flat.predictions(), cfg, 500, 77));

  // Fewer than two loss bins: nothing to evaluate.
  CHECK(!select_split_feature(ds, all_rows(900), preds, cfg, 500, 77));
}

TEST_CASE("grown trees respect depth, bin size and local-loss rules") {
  const auto ds = two_group(30000, 4);
  const auto preds = ds.predictions();
  for (std::size_t depth : {1u, 2u, 5u}) {
    MbctConfig cfg = small_config(1500);
    cfg.max_depth = depth;
    const auto tree = grow_tree(ds, all_rows(ds.size()), preds, cfg, 1500, 0);
    CHECK(tree.depth <= depth);
    const auto& root = tree.nodes[0];
    REQUIRE(!root.is_leaf());
    CHECK(*root.split_feature == 0);

    MbctModel model;
    model.config = cfg;
    model.num_features = ds.num_features();
    std::vector<IndexList> reached(tree.nodes.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto bucket = prediction_bucket(preds[i], cfg.prediction_buckets);
      reached[tree.route(ds.samples[i].features, bucket, model.num_features)].push_back(i);
    }
    std::vector<double> stepped(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) stepped[i] = apply_tree(tree, model, preds[i], ds.samples[i].features);
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      const auto& node = tree.nodes[k];
      CHECK(node.is_leaf() == node.children.empty());
      if (node.is_leaf()) {
        CHECK(reached[k].size() >= 1500);
        CHECK(pce(ds, reached[k], stepped) < 1e-9);
      } else {
        CHECK(node.local_mvce_after < node.local_mvce_before);
      }
    }
  }
}

TEST_CASE("two bias features are both recovered") {
  Rng rng(8);
  FeatureBiasOptions o;
  o.bias_features = {{{0, 1.3}, {1, 0.7}}, {{0, 1.1}, {1, 0.9}}};
  o.noise_features = 1;
  o.prediction_lo = 0.25;
  o.prediction_hi = 0.6;
  const auto train = synthetic_feature_bias_dataset(100000, o, rng);
  const auto test = synthetic_feature_bias_dataset(100000, o, rng);
  MbctConfig cfg;
  cfg.seed = 2;
  cfg.max_trees = 1;
  const auto model = fit_mbct(train, cfg);
  REQUIRE(model.trees.size() == 1);
  std::set<std::size_t> used;
  for (const auto& n : model.trees[0].nodes)
    if (n.split_feature) used.insert(*n.split_feature);
  CHECK(used.count(0) == 1);
  CHECK(used.count(1) == 1);
  CHECK(*model.trees[0].nodes[0].split_feature == 0);

  // Held-out leaf PUDs within the tolerance e.
  const auto cal = apply_mbct(model, test);
  const auto bins = mbct_node_bins(model, test, 0);
  for (const auto& row : pud_table(test, bins, cal, 1)) {
    CHECK(row.pud == doctest::Approx(1.0).epsilon(cfg.e));
  }
}

TEST_CASE("homogeneous data yields near-unit scalers") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto ds = synthetic_feature_bias_dataset(20000, {{0, 1.0}, {1, 1.0}}, rng);
    MbctConfig cfg;
    cfg.seed = seed;
    cfg.r = 30;
    cfg.max_trees = 1;
    const auto model = fit_mbct(ds, cfg);
    for (const auto& tree : model.trees) {
      for (const auto& n : tree.nodes) {
        if (n.is_leaf()) CHECK(n.scaler == doctest::Approx(1.0).epsilon(cfg.e));
      }
    }
  }
}

TEST_CASE("apply semantics") {
  MbctModel model;
  model.num_features = 1;
  model.config.prediction_buckets = 0;
  CalibrationTree identity;
  identity.nodes.push_back(TreeNode{});
  model.trees.push_back(identity);
  const std::vector<FeatureValue> f0{0};
  CHECK(apply_mbct(model, 0.37, f0) == 0.37);

  CalibrationTree split;
  TreeNode root;
  root.split_feature = 0;
  root.scaler = 0.5;
  root.children = {{0, 1}, {1, 2}};
  TreeNode a, b;
  a.scaler = 1.2;
  a.depth = b.depth = 1;
  b.scaler = 0.8;
  split.nodes = {root, a, b};
  split.depth = 1;
  model.trees = {split};
  CHECK(apply_mbct(model, 0.05, f0) == doctest::Approx(0.06));
  CHECK(apply_mbct(model, 0.04, f0) == doctest::Approx(0.048));
  CHECK(apply_mbct(model, 0.04, f0) != apply_mbct(model, 0.05, f0));
  // Unseen value stops at the root.
  const std::vector<FeatureValue> unseen{7};
  CHECK(apply_mbct(model, 0.4, unseen) == doctest::Approx(0.2));
  // Output stays a probability.
  CHECK(apply_mbct(model, 0.95, std::vector<FeatureValue>{0}) == 1.0);
  CHECK_THROWS_WITH(apply_mbct(model, 0.4, std::vector<FeatureValue>{0, 1}), doctest::Contains("schema mismatch"));
}

TEST_CASE("fit is deterministic and independent of threading") {
  const auto ds = two_group(20000, 6);
  MbctConfig cfg = small_config(1200);
  cfg.max_trees = 3;
  const auto a = fit_mbct(ds, cfg);
  const auto b = fit_mbct(ds, cfg);
  CHECK(mbct_to_json(a).dump() == mbct_to_json(b).dump());
  cfg.exec = kernels::Exec::Serial;
  const auto c = fit_mbct(ds, cfg);
  CHECK(mbct_to_json(a).dump() == mbct_to_json(c).dump());
}

TEST_CASE("boosting accepts trees only while the global loss drops") {
  const auto ds = two_group(30000, 7);
  MbctConfig cfg = small_config(1500);
  const auto model = fit_mbct(ds, cfg);
  CHECK(model.trees.size() <= cfg.max_trees);
  CHECK(model.trees.size() == model.global_mvce_per_tree.size());
  double prev = model.initial_global_mvce;
  for (double g : model.global_mvce_per_tree) {
    CHECK(g < prev);
    prev = g;
  }
  cfg.max_trees = 1;
  CHECK(fit_mbct(ds, cfg).trees.size() <= 1);

  cfg.validation_fraction = 0.3;
  const auto held = fit_mbct(ds, cfg);
  CHECK(held.trees.size() <= 1);
}

TEST_CASE("mbct output is individual and non-monotonic on the bias fixture") {
  const auto ds = two_group(30000, 9);
  MbctConfig cfg = small_config(1500);
  cfg.max_trees = 2;
  const auto model = fit_mbct(ds, cfg);
  const auto out = apply_mbct(model, ds);
  CHECK(classify_monotonicity(ds.predictions(), out) == Monotonicity::NonMonotonic);
  const auto bins = mbct_node_bins(model, ds, 0);
  for (const auto& b : bins) {
    std::map<double, double> seen;
    for (auto i : b) {
      const auto [it, fresh] = seen.emplace(ds.samples[i].prediction, out[i]);
      if (fresh) {
        for (const auto& [x, y] : seen)
          if (x != ds.samples[i].prediction) CHECK(y != out[i]);
      }
      if (seen.size() > 40) break;
    }
  }
}

TEST_CASE("fit preconditions") {
  const auto ds = two_group(2000, 1);
  MbctConfig cfg = small_config(1500);
  CHECK_THROWS(fit_mbct(ds, cfg));
  cfg.alpha = 1.5;
  CHECK_THROWS(fit_mbct(ds, cfg));
}

TEST_CASE("model json round-trip") {
  const auto ds = two_group(20000, 10);
  MbctConfig cfg = small_config(1000);
  cfg.max_trees = 3;
  const auto model = fit_mbct(ds, cfg);
  const auto back = mbct_from_json(nlohmann::json::parse(mbct_to_json(model).dump()));
  const auto a = apply_mbct(model, ds), b = apply_mbct(back, ds);
  CHECK(a == b);
  CHECK(mbct_to_json(back).dump() == mbct_to_json(model).dump());
}
