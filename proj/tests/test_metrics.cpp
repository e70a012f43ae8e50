#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mbct/metrics.hpp"
#include "oracles.hpp"

using namespace mbct;

namespace {

Dataset rows(std::vector<double> preds, std::vector<double> labels) {
  Dataset ds;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CalibrationSample s;
    s.prediction = preds[i];
    s.label = labels[i];
    ds.samples.push_back(s);
  }
  return ds;
}

Dataset bernoulli_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    CalibrationSample s;
    s.prediction = rng.uniform();
    s.label = rng.bernoulli(s.prediction) ? 1 : 0;
    ds.samples.push_back(s);
  }
  return ds;
}

IndexList all_rows(std::size_t n) {
  IndexList idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST_CASE("pce examples") {
  const auto a = rows({0.5, 0.5}, {0, 1});
  const std::vector<double> half{0.5, 0.5}, high{0.8, 0.8};
  CHECK(pce(a, all_rows(2), half) == 0.0);
  CHECK(pce(a, all_rows(2), high) == doctest::Approx(0.3));
  const auto one = rows({0.3}, {0});
  const std::vector<double> c{0.3};
  CHECK(pce(one, all_rows(1), c) == doctest::Approx(0.3));
  CHECK_THROWS(pce(one, IndexList{}, c));
}

TEST_CASE("mvce of an exact fit is zero and seeded runs repeat") {
  const auto ds = rows(std::vector<double>(40, 1.0), std::vector<double>(40, 1.0));
  const std::vector<double> cal(40, 1.0);
  MetricConfig cfg;
  cfg.bin_size = 5;
  CHECK(mvce(ds, cal, cfg) == 0.0);

  const auto b = bernoulli_data(5000, 1);
  const auto pred = b.predictions();
  cfg.bin_size = 100;
  cfg.seed = 99;
  CHECK(mvce(b, pred, cfg) == mvce(b, pred, cfg));
  cfg.exec = kernels::Exec::Serial;
  const double serial = mvce(b, pred, cfg);
  cfg.exec = kernels::Exec::Parallel;
  CHECK(serial == mvce(b, pred, cfg));
  cfg.bin_size = 2600;
  CHECK_THROWS_WITH(mvce(b, pred, cfg), doctest::Contains("degenerate division"));
}

TEST_CASE("mvce of calibrated data sits at the sampling noise floor") {
  // For calibrated c ~ U(0,1), each bin sum of (c - y) has variance
  // s * E[c(1-c)] = s/6, so the mean |PCE| is about sqrt(2/pi) * sqrt(1/(6 s)).
  const auto ds = bernoulli_data(10000, 17);
  const auto pred = ds.predictions();
  MetricConfig cfg;
  cfg.bin_size = 200;
  cfg.r = 100;
  cfg.seed = 3;
  const double floor_value = std::sqrt(2 / M_PI) * std::sqrt(1.0 / (6.0 * 200));
  const double value = mvce(ds, pred, cfg);
  CHECK(value == doctest::Approx(floor_value).epsilon(0.1));
}

// With one division the power wraps the mean PCE, which is the p = 1 ECE.
TEST_CASE("mvce with one sorted division equals l1 ece") {
  const auto ds = bernoulli_data(997, 8);
  std::vector<double> cal = ds.predictions();
  for (auto& c : cal) c = std::sqrt(c);
  for (std::size_t bins : {2u, 7u, 32u}) {
    for (double p : {1.0, 2.0, 3.0}) {
      Rng rng(0);
      const auto div = make_division_by_count(ds.size(), bins, DivisionKind::SortedUniformMass, rng,
                                              std::span<const double>(cal));
      DatasetColumns cols(ds, cal);
      const std::vector<DivisionScheme> one{div};
      CHECK(std::abs(mvce_over(cols.view(), one, p) - ece_n(ds, cal, bins, 1.0)) < 1e-12);
    }
  }
}

TEST_CASE("ece examples") {
  const auto ds = rows({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1});
  const auto cal = ds.predictions();
  CHECK(ece_n(ds, cal, 2, 1) == doctest::Approx(0.15));
  CHECK(ece_n(ds, cal, 2, 2) == doctest::Approx(0.15));
  const auto flat = rows({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1});
  CHECK(ece_n(flat, flat.predictions(), 2, 2) == doctest::Approx(0.0));
  CHECK_THROWS(ece_n(ds, cal, 5, 2));
}

TEST_CASE("ece agrees with the sorted-bin oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ds = bernoulli_data(300 + seed * 37, seed);
    const auto cal = ds.predictions();
    for (std::size_t k : {1u, 3u, 10u, 32u}) {
      CHECK(std::abs(ece_n(ds, cal, k, 2) - oracle::ece(ds, cal, k, 2)) < 1e-12);
    }
  }
}

TEST_CASE("ece sweep picks the bin count found by brute force") {
  int hit5 = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto ds = bernoulli_data(40, seed);
    const auto cal = ds.predictions();
    const auto [value, k] = oracle::ece_sweep(ds, cal, 2);
    const auto got = ece_sweep(ds, cal, 2);
    CHECK(got.n_bins == k);
    CHECK(std::abs(got.value - value) < 1e-12);
    hit5 += k == 5;
  }
  // The sample must contain the "monotone up to 5, not at 6" shape.
  CHECK(hit5 > 0);

  // Separable monotone data keeps growing until singleton bins.
  const auto sep = rows({0.1, 0.2, 0.3, 0.7, 0.8, 0.9}, {0, 0, 0, 1, 1, 1});
  CHECK(ece_sweep(sep, sep.predictions(), 2).n_bins == 6);

  // Constant calibrated values: two equal halves pass, the 1/1/2 split fails.
  const auto flat = rows({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0});
  CHECK(ece_sweep(flat, flat.predictions(), 2).n_bins == 2);
}

TEST_CASE("tce") {
  const std::vector<double> t{0.1, 0.5, 0.9};
  CHECK(tce(t, t, 2) == 0.0);
  const std::vector<double> c{0.2, 0.5, 0.9};
  CHECK(tce(t, c, 1) == doctest::Approx(0.1 / 3));
  CHECK(tce(t, c, 2) == doctest::Approx(std::sqrt(0.01 / 3)));

  // c ~ Beta(0.2, 0.7), truth c^2, l1 norm.
  Rng rng(12);
  const std::size_t n = 1000000;
  std::vector<double> truth(n), cal(n);
  for (std::size_t i = 0; i < n; ++i) {
    cal[i] = rng.beta(0.2, 0.7);
    truth[i] = cal[i] * cal[i];
  }
  const double expected = oracle::beta_moment(0.2, 0.7, 1) - oracle::beta_moment(0.2, 0.7, 2);
  CHECK(expected == doctest::Approx(0.0819).epsilon(0.001));
  CHECK(std::abs(tce(truth, cal, 1) - expected) < 1e-3);

  const auto real = rows({0.5}, {1});
  CHECK_THROWS_WITH(tce(real, real.predictions(), 2), doctest::Contains("TCE requires synthetic ground truth"));
}

TEST_CASE("auc examples and oracle") {
  const std::vector<double> y{0, 1, 0, 1};
  CHECK(auc(y, y) == 1.0);
  const std::vector<double> flat(4, 0.3);
  CHECK(auc(y, flat) == 0.5);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  CHECK(auc(y, s) == 1.0);
  const std::vector<double> ones{1, 1};
  CHECK_THROWS_WITH(auc(ones, ones), doctest::Contains("AUC undefined"));

  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> lab(n), sc(n);
    for (std::size_t i = 0; i < n; ++i) {
      lab[i] = static_cast<double>(rng.below(2));
      sc[i] = static_cast<double>(rng.below(20)) / 20;
    }
    lab[0] = 0;
    lab[1] = 1;
    CHECK(auc(lab, sc) == oracle::auc(lab, sc));
  }
}

TEST_CASE("pud") {
  const auto ds = rows({0.5, 0.5}, {0, 1});
  const std::vector<double> same{0.5, 0.5}, over{0.6, 0.6}, under{0.25, 0.25};
  CHECK(pud(ds, all_rows(2), same) == doctest::Approx(1.0));
  CHECK(pud(ds, all_rows(2), over) == doctest::Approx(1.2));
  CHECK(pud(ds, all_rows(2), under) == doctest::Approx(0.5));
  const auto zero = rows({0.5, 0.5}, {0, 0});
  CHECK_THROWS_WITH(pud(zero, all_rows(2), same), doctest::Contains("PUD undefined"));
}

TEST_CASE("bfgpce") {
  const auto ds = bernoulli_data(64, 4);
  const auto cal = ds.predictions();
  const auto idx = all_rows(64);
  Rng rng(1);
  CHECK(bfgpce(ds, idx, cal, 1, rng) == doctest::Approx(pce(ds, idx, cal)));
  double singles = 0;
  for (std::size_t i = 0; i < 64; ++i) singles += std::abs(cal[i] - ds.samples[i].label);
  CHECK(bfgpce(ds, idx, cal, 64, rng) == doctest::Approx(singles / 64));
  CHECK_THROWS(bfgpce(ds, idx, cal, 65, rng));

  // Calibrated per sample: the subset error shrinks as subsets grow.
  const auto big = bernoulli_data(40000, 8);
  const auto bcal = big.predictions();
  const auto bidx = all_rows(big.size());
  Rng r1(2), r2(2);
  const double coarse = bfgpce(big, bidx, bcal, 4, r1);    // subsets of 10000
  const double fine = bfgpce(big, bidx, bcal, 400, r2);    // subsets of 100
  CHECK(coarse < fine);
  CHECK(coarse < 0.01);
}

TEST_CASE("monotonicity classes") {
  const std::vector<double> f{0.1, 0.2, 0.3, 0.4};
  CHECK(classify_monotonicity(f, f) == Monotonicity::StrictlyMonotonic);
  const std::vector<double> binned{0.15, 0.15, 0.35, 0.35};
  CHECK(classify_monotonicity(f, binned) == Monotonicity::NonStrictlyMonotonic);
  const std::vector<double> swapped{0.1, 0.3, 0.2, 0.4};
  CHECK(classify_monotonicity(f, swapped) == Monotonicity::NonMonotonic);
  // Equal inputs may map anywhere as long as the order elsewhere holds.
  const std::vector<double> tied{0.2, 0.2, 0.3};
  const std::vector<double> spread{0.1, 0.25, 0.3};
  CHECK(classify_monotonicity(tied, spread) == Monotonicity::StrictlyMonotonic);

  // Brute-force the pairwise definition on small random instances.
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.below(4));
      b[i] = static_cast<double>(rng.below(4));
    }
    bool violated = false, strict = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if ((a[i] - a[j]) * (b[i] - b[j]) < 0) violated = true;
        if (a[i] != a[j] && b[i] == b[j]) strict = false;
      }
    const auto expect = violated ? Monotonicity::NonMonotonic
                                 : strict ? Monotonicity::StrictlyMonotonic : Monotonicity::NonStrictlyMonotonic;
    CHECK(classify_monotonicity(a, b) == expect);
  }
}

TEST_CASE("reordering rows leaves order-free metrics unchanged") {
  auto ds = bernoulli_data(1000, 21);
  const auto cal = ds.predictions();
  Rng rng(6);
  IndexList perm = all_rows(ds.size());
  rng.shuffle(std::span<std::size_t>(perm));
  Dataset shuffled;
  std::vector<double> scal;
  for (auto i : perm) {
    shuffled.samples.push_back(ds.samples[i]);
    scal.push_back(cal[i]);
  }
  CHECK(std::abs(ece_n(ds, cal, 10, 2) - ece_n(shuffled, scal, 10, 2)) < 1e-12);
  CHECK(auc(ds.labels(), cal) == auc(shuffled.labels(), scal));
  CHECK(std::abs(pce(ds, all_rows(1000), cal) - pce(shuffled, all_rows(1000), scal)) < 1e-12);
}

TEST_CASE("aggregation invariance over group-aligned bins") {
  // 60 groups of 5 identical rows; every group shares features and prediction.
  Dataset ds;
  ds.feature_names = {"g"};
  ds.feature_cardinalities = {60};
  Rng rng(10);
  for (FeatureValue g = 0; g < 60; ++g) {
    const double pred = (g + 0.5) / 60.0;
    for (int k = 0; k < 5; ++k) {
      CalibrationSample s;
      s.features = {g};
      s.prediction = pred;
      s.label = rng.bernoulli(pred * 0.8) ? 1 : 0;
      ds.samples.push_back(s);
    }
  }
  const auto agg = aggregate_dataset_with_groups(ds, 100);
  REQUIRE(agg.dataset.size() == 60);
  const auto cal = ds.predictions();
  const auto acal = agg.dataset.predictions();

  CHECK(std::abs(pce(ds, all_rows(300), cal) - pce(agg.dataset, all_rows(60), acal)) < 1e-9);
  CHECK(std::abs(ece_n(ds, cal, 6, 2) - ece_n(agg.dataset, acal, 6, 2)) < 1e-9);

  // MVCE over aggregated divisions and the raw divisions they induce.
  std::vector<DivisionScheme> agg_divs, raw_divs;
  Rng drng(4);
  for (int d = 0; d < 20; ++d) {
    auto div = make_division(60, 6, DivisionKind::ShuffledUniformMass, drng);
    DivisionScheme raw;
    raw.bins.resize(div.bins.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::size_t b = 0; b < div.bins.size(); ++b) {
        if (std::find(div.bins[b].begin(), div.bins[b].end(), agg.group_of[i]) != div.bins[b].end()) {
          raw.bins[b].push_back(i);
        }
      }
    }
    agg_divs.push_back(std::move(div));
    raw_divs.push_back(std::move(raw));
  }
  DatasetColumns rc(ds, cal), ac(agg.dataset, acal);
  CHECK(std::abs(mvce_over(rc.view(), raw_divs, 2) - mvce_over(ac.view(), agg_divs, 2)) < 1e-9);

  // Identity aggregation (all rows distinct) keeps the seeded MVCE exactly.
  const auto distinct = bernoulli_data(500, 2);
  const auto same = aggregate_dataset(distinct, 1000000000u);
  MetricConfig cfg;
  cfg.bin_size = 50;
  cfg.seed = 8;
  CHECK(std::abs(mvce(distinct, distinct.predictions(), cfg) - mvce(same, same.predictions(), cfg)) < 1e-9);
}

TEST_CASE("evaluate_metrics report") {
  const auto ds = bernoulli_data(4000, 30);
  const auto cal = ds.predictions();
  MetricConfig cfg;
  cfg.bin_size = 200;
  const auto rep = evaluate_metrics(ds, cal, cfg);
  CHECK(rep.mvce >= 0);
  CHECK(rep.ece >= 0);
  CHECK(rep.ece_sweep >= 0);
  CHECK(rep.auc > 0.5);
  CHECK(rep.per_division_pce.size() == cfg.r);
  CHECK(!rep.tce.has_value());
}
