// mbct: train, apply, evaluate and simulate calibrators from the command line.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mbct/analysis.hpp"
#include "mbct/calibrators.hpp"
#include "mbct/error.hpp"
#include "mbct/mbct.hpp"
#include "mbct/metrics.hpp"
#include "mbct/model_file.hpp"
#include "mbct/schema.hpp"
#include "mbct/sim.hpp"

using namespace mbct;
using nlohmann::json;

namespace {

struct TrainArgs {
  std::string data, schema, method = "mbct", out;
  double alpha = 0.05, e = 0.1, p = 2.0, validation_fraction = 0.0;
  std::size_t max_depth = 5, max_trees = 8, r = 100, bins = 0, min_bin_size = 0;
  std::uint64_t seed = 0;
};

struct CalibrateArgs {
  std::string model, data, out, column = "calibrated";
};

struct EvaluateArgs {
  std::string model, data, out;
  double p = 2.0;
  std::size_t r = 100, bins = 32, bin_size = 0, groups = 4;
  std::vector<std::size_t> curve;
  std::uint64_t seed = 0;
};

struct SimulateArgs {
  std::vector<double> beta{0.2, 0.7};
  double q = 2.0, p = 2.0;
  std::string metric = "all", out;
  std::vector<std::size_t> n{10000, 30000, 100000};
  std::vector<std::size_t> bins{32};
  std::size_t m = 200, r = 100;
  std::uint64_t seed = 0;
};

struct SynthArgs {
  std::size_t n = 10000;
  std::vector<double> multipliers{1.3, 0.7};
  std::size_t noise = 2;
  double lo = 0.05, hi = 0.6;
  std::uint64_t seed = 0;
  std::string out;
};

struct ExportArgs {
  std::string model, out;
};

Schema schema_for(const std::string& schema_path, const std::string& data_path) {
  if (!schema_path.empty()) return Schema::load(schema_path);
  return Schema::from_header(read_csv(data_path).header);
}

// Records go to `path` as JSON lines; nothing is written when it is empty.
class RecordSink {
 public:
  explicit RecordSink(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw Error("cannot write " + path);
  }
  void write(const json& record) {
    if (out_.is_open()) out_ << record.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

int run_train(const TrainArgs& a) {
  Schema schema = schema_for(a.schema, a.data);
  const Dataset ds = ingest(a.data, schema);

  MbctConfig cfg;
  cfg.alpha = a.alpha;
  cfg.e = a.e;
  cfg.max_depth = a.max_depth;
  cfg.max_trees = a.max_trees;
  cfg.r = a.r;
  cfg.p = a.p;
  cfg.seed = a.seed;
  cfg.validation_fraction = a.validation_fraction;
  if (a.min_bin_size > 0) cfg.min_bin_size_override = a.min_bin_size;
  cfg.validate();

  // Binning baselines default to the same rows-per-bin budget as MBCT.
  std::size_t bins = a.bins;
  if (bins == 0 && (a.method == "histogram" || a.method == "scaling-binning")) {
    const std::size_t beta =
        a.min_bin_size > 0 ? a.min_bin_size : solve_min_bin_size(ds, a.alpha, a.e).value;
    bins = std::max<std::size_t>(1, ds.size() / beta);
    std::printf("bins %zu (rows per bin %zu)\n", bins, beta);
  }

  std::unique_ptr<Calibrator> cal;
  if (a.method == "platt") {
    cal = std::make_unique<PlattCalibrator>();
  } else if (a.method == "beta") {
    cal = std::make_unique<BetaCalibrator>();
  } else if (a.method == "histogram") {
    cal = std::make_unique<HistogramCalibrator>(bins);
  } else if (a.method == "isotonic") {
    cal = std::make_unique<IsotonicCalibrator>();
  } else if (a.method == "scaling-binning") {
    cal = std::make_unique<ScalingBinningCalibrator>(bins);
  } else if (a.method == "mbct") {
    cal = std::make_unique<MbctCalibrator>(cfg);
  } else {
    throw Error("unknown method " + a.method);
  }
  cal->fit(ds);

  std::printf("trained %s on %zu rows, %zu features\n", std::string(cal->kind()).c_str(), ds.size(),
              ds.num_features());
  if (const auto* m = dynamic_cast<const MbctCalibrator*>(cal.get())) {
    const auto& model = m->model();
    std::printf("min bin size %zu%s\n", model.min_bin_size, model.min_bin_size_feasible ? "" : " (bound infeasible)");
    std::printf("global mvce initial %.6f\n", model.initial_global_mvce);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const auto& tree = model.trees[t];
      std::printf("tree %zu: depth %zu leaves %zu global mvce %.6f\n", t, tree.depth, tree.leaf_count(),
                  model.global_mvce_per_tree[t]);
    }
  }
  save_model(a.out, *cal, &schema);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

ModelFile load_with_schema(const std::string& path) {
  auto mf = load_model(path);
  if (!mf.schema) throw Error("model " + path + " carries no schema; retrain with the CLI");
  return mf;
}

int run_calibrate(const CalibrateArgs& a) {
  auto mf = load_with_schema(a.model);
  const auto table = read_csv(a.data);
  const Dataset ds = table_to_dataset(table, *mf.schema);
  std::ofstream out(a.out);
  if (!out) throw Error("cannot write " + a.out);
  for (std::size_t c = 0; c < table.header.size(); ++c) out << csv_field(table.header[c]) << ',';
  out << csv_field(a.column) << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& cell : table.rows[i]) out << csv_field(cell) << ',';
    const auto& s = ds.samples[i];
    std::snprintf(buf, sizeof buf, "%.17g", mf.calibrator->apply(s.prediction, s.features));
    out << buf << '\n';
  }
  std::printf("calibrated %zu rows -> %s\n", ds.size(), a.out.c_str());
  return 0;
}

int run_evaluate(const EvaluateArgs& a) {
  auto mf = load_with_schema(a.model);
  const Dataset ds = ingest(a.data, *mf.schema);
  const auto cal = mf.calibrator->apply_all(ds);
  const auto* mbct_cal = dynamic_cast<const MbctCalibrator*>(mf.calibrator.get());

  MetricConfig mc;
  mc.p = a.p;
  mc.r = a.r;
  mc.n_bins = a.bins;
  mc.seed = a.seed;
  mc.bin_size = a.bin_size;
  if (mc.bin_size == 0) {
    mc.bin_size = mbct_cal ? mbct_cal->model().min_bin_size : std::max<std::size_t>(2, ds.size() / a.bins);
  }
  const auto report = evaluate_metrics(ds, cal, mc);
  const auto preds = ds.predictions();
  const auto mono = classify_monotonicity(preds, cal);
  const double base_auc = auc(ds.labels(), preds);

  RecordSink sink(a.out);
  std::printf("model        %s\n", std::string(mf.calibrator->kind()).c_str());
  std::printf("rows         %zu\n", ds.size());
  std::printf("mvce         %.6f  (r=%zu, bin size %zu)\n", report.mvce, mc.r, mc.bin_size);
  std::printf("ece          %.6f  (%zu bins)\n", report.ece, mc.n_bins);
  std::printf("ece_sweep    %.6f  (%zu bins)\n", report.ece_sweep, report.ece_sweep_bins);
  std::printf("auc          %.6f  (uncalibrated %.6f)\n", report.auc, base_auc);
  if (report.tce) std::printf("tce          %.6f\n", *report.tce);
  std::printf("monotonicity %s\n", to_string(mono));
  json summary = {{"record", "metrics"},       {"model", mf.calibrator->kind()}, {"rows", ds.size()},
                  {"mvce", report.mvce},       {"mvce_bin_size", mc.bin_size},   {"r", mc.r},
                  {"ece", report.ece},         {"ece_bins", mc.n_bins},          {"ece_sweep", report.ece_sweep},
                  {"ece_sweep_bins", report.ece_sweep_bins}, {"auc", report.auc}, {"auc_uncalibrated", base_auc},
                  {"monotonicity", to_string(mono)}};
  if (report.tce) summary["tce"] = *report.tce;
  sink.write(summary);

  if (mbct_cal) {
    const auto& model = mbct_cal->model();
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const auto bins = mbct_node_bins(model, ds, t);
      std::vector<IndexList> nonempty;
      std::vector<std::size_t> node_ids;
      for (std::size_t k = 0; k < bins.size(); ++k) {
        if (bins[k].size() >= a.groups && model.trees[t].nodes[k].is_leaf()) {
          nonempty.push_back(bins[k]);
          node_ids.push_back(k);
        }
      }
      const auto rows = pud_table(ds, nonempty, cal, a.groups, SubgroupOrder::Features, a.seed);
      std::printf("\ntree %zu leaf PUD (%zu sub-groups)\n%6s %10s %8s  sub-groups\n", t, a.groups, "node", "rows", "pud");
      for (std::size_t j = 0; j < rows.size(); ++j) {
        std::printf("%6zu %10.0f %8.4f ", node_ids[j], rows[j].count, rows[j].pud);
        for (double s : rows[j].subgroups) std::printf(" %.4f", s);
        std::printf("\n");
        sink.write({{"record", "leaf_pud"}, {"tree", t}, {"node", node_ids[j]}, {"rows", rows[j].count},
                    {"pud", rows[j].pud}, {"subgroups", rows[j].subgroups}});
      }
    }
  }

  if (!a.curve.empty()) {
    const auto points = mvce_bin_size_curve(ds, cal, a.curve, mc);
    std::printf("\n%10s %10s\n", "bin_size", "mvce");
    for (const auto& pt : points) {
      std::printf("%10zu %10.6f\n", pt.bin_size, pt.mvce);
      sink.write({{"record", "mvce_curve"}, {"bin_size", pt.bin_size}, {"mvce", pt.mvce}});
    }
  }
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  if (a.beta.size() != 2) throw Error("--beta takes two values");
  SimScenario sc{a.beta[0], a.beta[1], a.q, a.p};
  sc.validate();
  std::vector<SimMetric> metrics;
  if (a.metric == "all") {
    metrics = {SimMetric::Ece, SimMetric::EceSweep, SimMetric::Mvce};
  } else {
    metrics = {parse_sim_metric(a.metric)};
  }
  RecordSink sink(a.out);
  const double truth = analytic_tce(sc);
  std::printf("scenario beta(%g,%g) q=%g p=%g, analytic tce %.6f", sc.beta_a, sc.beta_b, sc.truth_exponent, sc.p, truth);
  if (const auto pub = published_tce(sc)) std::printf(", published %.4f", *pub);
  std::printf("\n%-10s %8s %8s %6s %12s %12s\n", "metric", "bins", "n", "m", "e_bias", "mean");
  Rng rng(a.seed);
  for (auto b : a.bins) {
    for (auto n : a.n) {
      for (const auto& res : estimate_e_bias_paired(sc, metrics, n, b, a.m, rng, kernels::Exec::Parallel, a.r)) {
        std::printf("%-10s %8zu %8zu %6zu %12.6f %12.6f\n", res.metric.c_str(), res.n_bins, res.n, res.m,
                    res.e_bias_hat, res.metric_mean);
        sink.write({{"record", "e_bias"}, {"metric", res.metric}, {"bins", res.n_bins}, {"n", res.n}, {"m", res.m},
                    {"e_bias", res.e_bias_hat}, {"metric_mean", res.metric_mean}, {"tce", res.tce_analytic}});
      }
    }
  }
  return 0;
}

int run_export(const ExportArgs& a) {
  const auto mf = load_model(a.model);
  const auto* m = dynamic_cast<const MbctCalibrator*>(mf.calibrator.get());
  if (!m) throw Error("export-rules needs an mbct model, got " + std::string(mf.calibrator->kind()));
  const auto rules = export_rules(m->model());
  const auto text = format_rules(rules);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    out << text;
    std::printf("wrote %zu rules -> %s\n", rules.rule_count(), a.out.c_str());
  }
  return 0;
}

int run_synth(const SynthArgs& a) {
  FeatureBiasOptions o;
  std::map<FeatureValue, double> groups;
  for (std::size_t g = 0; g < a.multipliers.size(); ++g) groups[static_cast<FeatureValue>(g)] = a.multipliers[g];
  o.bias_features = {groups};
  o.noise_features = a.noise;
  o.prediction_lo = a.lo;
  o.prediction_hi = a.hi;
  Rng rng(a.seed);
  const auto ds = synthetic_feature_bias_dataset(a.n, o, rng);
  std::ofstream out(a.out);
  if (!out) throw Error("cannot write " + a.out);
  for (const auto& name : ds.feature_names) out << name << ',';
  out << "prediction,label,true_prob\n";
  char buf[64];
  for (const auto& s : ds.samples) {
    for (auto f : s.features) out << f << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%g,%.17g", s.prediction, s.label, *s.true_prob);
    out << buf << '\n';
  }
  std::printf("wrote %zu rows -> %s\n", ds.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-aware calibration with boosted calibration trees"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "fit a calibrator and write a model file");
  train->add_option("--data", ta.data, "training CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--schema", ta.schema, "schema JSON (default: derived from the header)")->check(CLI::ExistingFile);
  train->add_option("--method", ta.method, "calibrator")
      ->check(CLI::IsMember({"platt", "beta", "histogram", "isotonic", "scaling-binning", "mbct"}))
      ->capture_default_str();
  train->add_option("--alpha", ta.alpha, "confidence level of the bin-size bound")->capture_default_str();
  train->add_option("--e", ta.e, "tolerated relative error of a bin")->capture_default_str();
  train->add_option("--max-depth", ta.max_depth)->capture_default_str();
  train->add_option("--max-trees", ta.max_trees)->capture_default_str();
  train->add_option("--r", ta.r, "MVCE divisions")->capture_default_str();
  train->add_option("--p", ta.p, "norm exponent")->capture_default_str();
  train->add_option("--bins", ta.bins, "histogram / scaling-binning bins (default: rows / min bin size)");
  train->add_option("--min-bin-size", ta.min_bin_size, "override the solved minimum bin size");
  train->add_option("--validation-fraction", ta.validation_fraction, "rows held out for tree acceptance")
      ->capture_default_str();
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_option("--out", ta.out, "model file")->required();

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "append calibrated predictions to a CSV");
  calibrate->add_option("--model", ca.model)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--data", ca.data)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--out", ca.out)->required();
  calibrate->add_option("--column", ca.column, "name of the appended column")->capture_default_str();

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "report calibration and ranking metrics");
  evaluate->add_option("--model", ea.model)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ea.data)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--r", ea.r, "MVCE divisions")->capture_default_str();
  evaluate->add_option("--p", ea.p)->capture_default_str();
  evaluate->add_option("--bins", ea.bins, "ECE bins")->capture_default_str();
  evaluate->add_option("--bin-size", ea.bin_size, "MVCE rows per bin (default: model min bin size or rows / bins)");
  evaluate->add_option("--groups", ea.groups, "sub-groups per leaf in the PUD table")->capture_default_str();
  evaluate->add_option("--curve", ea.curve, "bin sizes for an MVCE curve")->delimiter(',');
  evaluate->add_option("--seed", ea.seed)->capture_default_str();
  evaluate->add_option("--out", ea.out, "JSON-lines records");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "estimate metric bias on synthetic predictions");
  simulate->add_option("--beta", sa.beta, "prediction distribution Beta(a, b)")->expected(2)->capture_default_str();
  simulate->add_option("--q", sa.q, "true probability = prediction^q")->capture_default_str();
  simulate->add_option("--p", sa.p)->capture_default_str();
  simulate->add_option("--metric", sa.metric, "ece, ece_sweep, mvce or all")->capture_default_str();
  simulate->add_option("--n", sa.n, "sample counts")->delimiter(',')->capture_default_str();
  simulate->add_option("--bins", sa.bins, "bin counts")->delimiter(',')->capture_default_str();
  simulate->add_option("--m", sa.m, "experiments per cell")->capture_default_str();
  simulate->add_option("--r", sa.r, "MVCE divisions")->capture_default_str();
  simulate->add_option("--seed", sa.seed)->capture_default_str();
  simulate->add_option("--out", sa.out, "JSON-lines records");

  ExportArgs xa;
  auto* exp = app.add_subcommand("export-rules", "write an mbct model as a rule list");
  exp->add_option("--model", xa.model)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", xa.out, "rule file (default: stdout)");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset whose bias depends on one feature");
  synth->add_option("--n", ya.n)->capture_default_str();
  synth->add_option("--multipliers", ya.multipliers, "prediction / true probability per value of feature 0")
      ->delimiter(',')
      ->capture_default_str();
  synth->add_option("--noise-features", ya.noise)->capture_default_str();
  synth->add_option("--lo", ya.lo, "smallest prediction")->capture_default_str();
  synth->add_option("--hi", ya.hi, "largest prediction")->capture_default_str();
  synth->add_option("--seed", ya.seed)->capture_default_str();
  synth->add_option("--out", ya.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(ta);
    if (*calibrate) return run_calibrate(ca);
    if (*evaluate) return run_evaluate(ea);
    if (*simulate) return run_simulate(sa);
    if (*exp) return run_export(xa);
    if (*synth) return run_synth(ya);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mbct: %s\n", e.what());
    return 1;
  }
  return 0;
}
