#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mbct/mbct.hpp"
#include "mbct/model_file.hpp"
#include "mbct/schema.hpp"
#include "mbct/sim.hpp"

using namespace mbct;

namespace {

Dataset fixture(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  FeatureBiasOptions o;
  o.bias_features = {{{0, 1.3}, {1, 0.7}}};
  o.prediction_lo = 0.25;
  o.prediction_hi = 0.6;
  return synthetic_feature_bias_dataset(n, o, rng);
}

MbctModel fitted(const Dataset& ds, std::size_t trees = 3) {
  MbctConfig cfg;
  cfg.min_bin_size_override = 800;
  cfg.r = 30;
  cfg.seed = 11;
  cfg.max_trees = trees;
  return fit_mbct(ds, cfg);
}

}  // namespace

TEST_CASE("rules reproduce the model") {
  const auto train = fixture(20000, 1);
  const auto model = fitted(train);
  REQUIRE(!model.trees.empty());
  const auto rules = export_rules(model);
  std::size_t leaves = 0;
  for (const auto& t : model.trees) leaves += t.leaf_count();
  CHECK(rules.rule_count() == leaves);

  const auto test = fixture(10000, 2);
  const auto reparsed = parse_rules(format_rules(rules));
  for (const auto& s : test.samples) {
    const double want = apply_mbct(model, s.prediction, s.features);
    CHECK(rules.apply(s.prediction, s.features) == doctest::Approx(want).epsilon(1e-12));
    CHECK(reparsed.apply(s.prediction, s.features) == doctest::Approx(want).epsilon(1e-12));
  }
  // Unseen value falls back to the deepest matching internal node.
  std::vector<FeatureValue> unseen = test.samples[0].features;
  unseen[0] = 9;
  CHECK(rules.apply(0.3, unseen) == doctest::Approx(apply_mbct(model, 0.3, unseen)).epsilon(1e-12));
}

TEST_CASE("rule text format") {
  MbctModel model;
  model.num_features = 1;
  model.feature_names = {"site"};
  model.config.prediction_buckets = 0;
  CalibrationTree root_only;
  TreeNode root;
  root.scaler = 1.25;
  root_only.nodes.push_back(root);
  model.trees.push_back(root_only);
  const auto text = format_rules(export_rules(model));
  CHECK(text.find("rule TRUE => 1.25") != std::string::npos);
  CHECK(text.rfind("MBCT-RULES 1", 0) == 0);

  CalibrationTree split;
  TreeNode r;
  r.split_feature = 0;
  r.scaler = 0.5;
  r.children = {{0, 1}, {3, 2}};
  TreeNode a, b;
  a.scaler = 1.1;
  b.scaler = 0.9;
  a.depth = b.depth = 1;
  split.nodes = {r, a, b};
  model.trees = {split};
  const auto rs = export_rules(model);
  CHECK(rs.rule_count() == 2);
  const auto t2 = format_rules(rs);
  CHECK(t2.find("rule f0=3 => 0.9") != std::string::npos);
  CHECK(t2.find("fallbacks 1") != std::string::npos);
  CHECK(format_rules(parse_rules(t2)) == t2);

  CHECK_THROWS_WITH(parse_rules("MBCT-RULES 2\n"), doctest::Contains("rules line 1"));
  CHECK_THROWS_WITH(parse_rules("MBCT-RULES 1\nprediction_buckets 0\nfeatures 1\nfeature 0 site\ntrees 1\n"
                                "tree 0 rules 1 fallbacks 0\nrule nosuch=1 => 2\n"),
                    doctest::Contains("rules line 7"));
}

TEST_CASE("model files round-trip every calibrator kind") {
  const auto ds = fixture(20000, 3);
  std::vector<std::unique_ptr<Calibrator>> cals;
  cals.push_back(std::make_unique<PlattCalibrator>());
  cals.push_back(std::make_unique<BetaCalibrator>());
  cals.push_back(std::make_unique<HistogramCalibrator>(20));
  cals.push_back(std::make_unique<IsotonicCalibrator>());
  cals.push_back(std::make_unique<ScalingBinningCalibrator>(20));
  MbctConfig cfg;
  cfg.min_bin_size_override = 800;
  cfg.r = 30;
  cfg.max_trees = 2;
  cals.push_back(std::make_unique<MbctCalibrator>(cfg));

  Schema schema = Schema::from_header({"f0", "f1", "f2", "prediction", "label"});
  const auto dir = std::filesystem::temp_directory_path() / "mbct_model_test";
  std::filesystem::create_directories(dir);
  for (auto& c : cals) {
    c->fit(ds);
    const auto path = (dir / (std::string(c->kind()) + ".model")).string();
    save_model(path, *c, &schema);
    const auto back = load_model(path);
    REQUIRE(back.calibrator);
    CHECK(back.calibrator->kind() == c->kind());
    REQUIRE(back.schema);
    CHECK(back.schema->to_json() == schema.to_json());
    for (std::size_t i = 0; i < 200; ++i) {
      const auto& s = ds.samples[i];
      CHECK(back.calibrator->apply(s.prediction, s.features) == c->apply(s.prediction, s.features));
    }
    CHECK(format_model(*back.calibrator) == format_model(*c));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("model file header errors") {
  CHECK_THROWS_WITH(parse_model("{}"), doctest::Contains("MBCT-MODEL"));
  CHECK_THROWS_WITH(parse_model("MBCT-MODEL 9\n{}"), doctest::Contains("version"));
  CHECK_THROWS(parse_model("MBCT-MODEL 1\n{\"calibrator\":{\"kind\":\"nope\"}}"));
  CHECK_THROWS(load_model("/nonexistent/path.model"));
}
