#include "mbct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mbct {

void MetricConfig::validate() const {
  if (!(p >= 1.0)) throw Error("metric config: p must be >= 1");
  if (r < 1) throw Error("metric config: r must be >= 1");
  if (bin_size < 2) throw Error("metric config: bin_size must be >= 2");
  if (n_bins < 1) throw Error("metric config: n_bins must be >= 1");
}

DatasetColumns::DatasetColumns(const Dataset& dataset, std::span<const double> calibrated)
    : calibrated_(calibrated), labels_(dataset.labels()), weights_(dataset.weights()) {
  if (calibrated.size() != dataset.size()) throw Error("calibrated vector not aligned with dataset");
}

namespace {

struct BinMeans {
  double calibrated = 0.0;
  double label = 0.0;
  double weight = 0.0;
};

BinMeans bin_means(const CalibrationView& view, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error("empty bin");
  BinMeans m;
  double wc = 0.0, wy = 0.0;
  for (auto i : indices) {
    const double w = view.weight(i);
    m.weight += w;
    wc += w * view.calibrated[i];
    wy += w * view.labels[i];
  }
  m.calibrated = wc / m.weight;
  m.label = wy / m.weight;
  return m;
}

void check_view(const CalibrationView& view) {
  if (view.calibrated.size() != view.labels.size() ||
      (!view.weights.empty() && view.weights.size() != view.labels.size())) {
    throw Error("calibrated vector not aligned with dataset");
  }
}

// Sorted prefix sums used by ECE and the monotonic sweep.
struct SortedPrefix {
  std::vector<double> w, wy, wc;  // size n + 1

  explicit SortedPrefix(const CalibrationView& view) {
    const auto order = stable_order(view.calibrated);
    const std::size_t n = order.size();
    w.assign(n + 1, 0.0);
    wy.assign(n + 1, 0.0);
    wc.assign(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = order[k];
      const double wi = view.weight(i);
      w[k + 1] = w[k] + wi;
      wy[k + 1] = wy[k] + wi * view.labels[i];
      wc[k + 1] = wc[k] + wi * view.calibrated[i];
    }
  }

  std::size_t size() const { return w.size() - 1; }
  double label_mean(std::size_t lo, std::size_t hi) const { return (wy[hi] - wy[lo]) / (w[hi] - w[lo]); }
  double pce(std::size_t lo, std::size_t hi) const {
    const double ww = w[hi] - w[lo];
    return std::abs((wc[hi] - wc[lo]) / ww - (wy[hi] - wy[lo]) / ww);
  }
};

double ece_from_prefix(const SortedPrefix& prefix, std::size_t n_bins, double p) {
  double acc = 0.0;
  std::size_t lo = 0;
  for (auto size : uniform_mass_sizes(prefix.size(), n_bins)) {
    acc += std::pow(prefix.pce(lo, lo + size), p);
    lo += size;
  }
  return std::pow(acc / static_cast<double>(n_bins), 1.0 / p);
}

bool monotone_bins(const SortedPrefix& prefix, std::size_t n_bins) {
  double prev = -1.0;
  std::size_t lo = 0;
  for (auto size : uniform_mass_sizes(prefix.size(), n_bins)) {
    const double mean = prefix.label_mean(lo, lo + size);
    if (mean < prev) return false;
    prev = mean;
    lo += size;
  }
  return true;
}

}  // namespace

double pce(const CalibrationView& view, std::span<const std::size_t> indices) {
  check_view(view);
  const auto m = bin_means(view, indices);
  return std::abs(m.calibrated - m.label);
}

double pce(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated) {
  DatasetColumns cols(dataset, calibrated);
  return pce(cols.view(), indices);
}

double pud(const CalibrationView& view, std::span<const std::size_t> indices) {
  check_view(view);
  const auto m = bin_means(view, indices);
  if (!(m.label > 0.0)) throw Error("PUD undefined");
  return m.calibrated / m.label;
}

double pud(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated) {
  DatasetColumns cols(dataset, calibrated);
  return pud(cols.view(), indices);
}

double bfgpce(const CalibrationView& view, std::span<const std::size_t> indices, std::size_t k, Rng& rng) {
  check_view(view);
  if (k == 0 || k > indices.size()) throw Error("bfgpce: k exceeds bin size");
  IndexList shuffled(indices.begin(), indices.end());
  rng.shuffle(std::span<std::size_t>(shuffled));
  double total = 0.0;
  std::size_t pos = 0;
  for (auto size : uniform_mass_sizes(shuffled.size(), k)) {
    total += pce(view, std::span<const std::size_t>(shuffled).subspan(pos, size));
    pos += size;
  }
  return total / static_cast<double>(k);
}

double bfgpce(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated,
              std::size_t k, Rng& rng) {
  DatasetColumns cols(dataset, calibrated);
  return bfgpce(cols.view(), indices, k, rng);
}

MvceResult mvce_detail(const CalibrationView& view, const MetricConfig& config, Rng& rng) {
  config.validate();
  check_view(view);
  std::vector<double> unit;
  if (view.weights.empty()) unit.assign(view.size(), 1.0);
  const auto residuals = kernels::make_residuals(view.calibrated, view.labels, view.weights.empty() ? unit : view.weights);
  std::vector<std::uint64_t> seeds(config.r);
  for (auto& s : seeds) s = rng.next_u64();
  MvceResult out;
  out.per_division = kernels::shuffled_division_mean_pce(residuals, config.bin_size, seeds, config.exec);
  out.value = kernels::power_mean(out.per_division, config.p);
  return out;
}

double mvce(const CalibrationView& view, const MetricConfig& config, Rng& rng) {
  return mvce_detail(view, config, rng).value;
}

double mvce(const Dataset& dataset, std::span<const double> calibrated, const MetricConfig& config, Rng& rng) {
  DatasetColumns cols(dataset, calibrated);
  return mvce(cols.view(), config, rng);
}

double mvce(const Dataset& dataset, std::span<const double> calibrated, const MetricConfig& config) {
  Rng rng(config.seed);
  return mvce(dataset, calibrated, config, rng);
}

double mvce_over(const CalibrationView& view, std::span<const DivisionScheme> divisions, double p) {
  check_view(view);
  if (divisions.empty()) throw Error("mvce: no divisions");
  std::vector<double> means;
  means.reserve(divisions.size());
  for (const auto& div : divisions) {
    if (div.bins.empty()) throw Error("degenerate division");
    double total = 0.0;
    for (const auto& bin : div.bins) total += pce(view, bin);
    means.push_back(total / static_cast<double>(div.num_bins()));
  }
  return kernels::power_mean(means, p);
}

double ece_n(const CalibrationView& view, std::size_t n_bins, double p) {
  check_view(view);
  if (n_bins == 0 || n_bins > view.size()) throw Error("ece: n_bins exceeds dataset size");
  return ece_from_prefix(SortedPrefix(view), n_bins, p);
}

double ece_n(const Dataset& dataset, std::span<const double> calibrated, std::size_t n_bins, double p) {
  DatasetColumns cols(dataset, calibrated);
  return ece_n(cols.view(), n_bins, p);
}

SweepResult ece_sweep(const CalibrationView& view, double p) {
  check_view(view);
  if (view.size() < 1) throw Error("ece_sweep: empty input");
  const SortedPrefix prefix(view);
  std::size_t chosen = 1;
  for (std::size_t k = 2; k <= prefix.size(); ++k) {
    if (!monotone_bins(prefix, k)) break;
    chosen = k;
  }
  return {ece_from_prefix(prefix, chosen, p), chosen};
}

SweepResult ece_sweep(const Dataset& dataset, std::span<const double> calibrated, double p) {
  DatasetColumns cols(dataset, calibrated);
  return ece_sweep(cols.view(), p);
}

double tce(std::span<const double> true_probs, std::span<const double> calibrated, double p,
           std::span<const double> weights) {
  if (true_probs.size() != calibrated.size() || true_probs.empty()) {
    throw Error("tce: true probabilities and calibrated values must be non-empty and aligned");
  }
  double acc = 0.0, total = 0.0;
  for (std::size_t i = 0; i < true_probs.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    acc += w * std::pow(std::abs(true_probs[i] - calibrated[i]), p);
    total += w;
  }
  return std::pow(acc / total, 1.0 / p);
}

double tce(const Dataset& dataset, std::span<const double> calibrated, double p) {
  const auto truth = dataset.true_probs();
  const auto weights = dataset.weights();
  return tce(truth, calibrated, p, weights);
}

double auc(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw Error("auc: length mismatch");
  std::int64_t positives = 0, negatives = 0;
  for (double y : labels) {
    if (y == 1.0) {
      ++positives;
    } else if (y == 0.0) {
      ++negatives;
    } else {
      throw Error("auc: labels must be 0 or 1");
    }
  }
  if (positives == 0 || negatives == 0) throw Error("AUC undefined");

  const auto order = stable_order(scores);
  // Twice the rank sum of positives; ranks are 1-based, ties share the mean.
  std::int64_t twice_rank_sum = 0;
  std::size_t lo = 0;
  while (lo < order.size()) {
    std::size_t hi = lo;
    std::int64_t group_pos = 0;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) {
      if (labels[order[hi]] == 1.0) ++group_pos;
      ++hi;
    }
    twice_rank_sum += group_pos * static_cast<std::int64_t>(lo + 1 + hi);
    lo = hi;
  }
  const std::int64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

const char* to_string(Monotonicity m) {
  switch (m) {
    case Monotonicity::StrictlyMonotonic: return "strictly_monotonic";
    case Monotonicity::NonStrictlyMonotonic: return "non_strictly_monotonic";
    case Monotonicity::NonMonotonic: return "non_monotonic";
  }
  return "unknown";
}

Monotonicity classify_monotonicity(std::span<const double> predictions, std::span<const double> calibrated) {
  if (predictions.size() != calibrated.size()) throw Error("monotonicity: length mismatch");
  const auto order = stable_order(predictions);
  bool strict = true;
  bool have_prev = false;
  double prev_max = 0.0;
  std::size_t lo = 0;
  while (lo < order.size()) {
    std::size_t hi = lo;
    double group_min = calibrated[order[lo]], group_max = group_min;
    while (hi < order.size() && predictions[order[hi]] == predictions[order[lo]]) {
      group_min = std::min(group_min, calibrated[order[hi]]);
      group_max = std::max(group_max, calibrated[order[hi]]);
      ++hi;
    }
    if (have_prev) {
      if (group_min < prev_max) return Monotonicity::NonMonotonic;
      if (group_min == prev_max) strict = false;
    }
    prev_max = have_prev ? std::max(prev_max, group_max) : group_max;
    have_prev = true;
    lo = hi;
  }
  return strict ? Monotonicity::StrictlyMonotonic : Monotonicity::NonStrictlyMonotonic;
}

MetricReport evaluate_metrics(const Dataset& dataset, std::span<const double> calibrated,
                              const MetricConfig& config) {
  DatasetColumns cols(dataset, calibrated);
  const auto view = cols.view();
  MetricReport report;
  Rng rng(config.seed);
  auto mv = mvce_detail(view, config, rng);
  report.mvce = mv.value;
  report.per_division_pce = std::move(mv.per_division);
  report.ece = ece_n(view, config.n_bins, config.p);
  const auto sweep = ece_sweep(view, config.p);
  report.ece_sweep = sweep.value;
  report.ece_sweep_bins = sweep.n_bins;
  report.auc = auc(view.labels, view.calibrated);
  if (std::all_of(dataset.samples.begin(), dataset.samples.end(), [](const auto& s) { return s.true_prob.has_value(); })) {
    report.tce = tce(dataset, calibrated, config.p);
  }
  return report;
}

}  // namespace mbct
