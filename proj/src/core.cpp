#include "mbct/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace mbct {

void Dataset::validate() const {
  if (feature_names.size() != feature_cardinalities.size()) {
    throw Error("dataset: feature_names and feature_cardinalities differ in length");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto row = std::to_string(i);
    if (!(s.prediction >= 0.0 && s.prediction <= 1.0)) {
      throw Error("dataset: row " + row + ": prediction outside [0,1]");
    }
    if (!(s.label >= 0.0 && s.label <= 1.0)) throw Error("dataset: row " + row + ": label outside [0,1]");
    if (s.true_prob && !(*s.true_prob >= 0.0 && *s.true_prob <= 1.0)) {
      throw Error("dataset: row " + row + ": true_prob outside [0,1]");
    }
    if (!(s.weight > 0.0)) throw Error("dataset: row " + row + ": weight must be positive");
    if (s.features.size() != feature_cardinalities.size()) {
      throw Error("dataset: row " + row + ": feature count mismatch");
    }
    for (std::size_t f = 0; f < s.features.size(); ++f) {
      if (s.features[f] >= feature_cardinalities[f]) {
        throw Error("dataset: row " + row + ": feature " + std::to_string(f) + " exceeds cardinality");
      }
    }
  }
}

std::vector<double> Dataset::predictions() const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].prediction;
  return out;
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].label;
  return out;
}

std::vector<double> Dataset::weights() const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].weight;
  return out;
}

std::vector<double> Dataset::true_probs() const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].true_prob) throw Error("TCE requires synthetic ground truth");
    out[i] = *samples[i].true_prob;
  }
  return out;
}

double Dataset::total_weight() const {
  double total = 0.0;
  for (const auto& s : samples) total += s.weight;
  return total;
}

BinStats compute_bin_stats(const Dataset& dataset, std::span<const std::size_t> indices,
                           std::optional<std::span<const double>> calibrated) {
  if (indices.empty()) throw Error("empty bin");
  if (calibrated && calibrated->size() != dataset.size()) {
    throw Error("compute_bin_stats: calibrated vector not aligned with dataset");
  }
  double w_sum = 0.0, wy = 0.0, wp = 0.0;
  for (auto i : indices) {
    const auto& s = dataset.samples.at(i);
    const double pred = calibrated ? (*calibrated)[i] : s.prediction;
    w_sum += s.weight;
    wy += s.weight * s.label;
    wp += s.weight * pred;
  }
  BinStats stats;
  stats.count = w_sum;
  stats.mean_label = wy / w_sum;
  stats.mean_prediction = wp / w_sum;
  double var = 0.0;
  for (auto i : indices) {
    const auto& s = dataset.samples[i];
    const double d = s.label - stats.mean_label;
    var += s.weight * d * d;
  }
  // Aggregated rows hold a mean label; their within-group spread y(1-y) is
  // part of the raw variance.
  for (auto i : indices) {
    const auto& s = dataset.samples[i];
    if (s.label != 0.0 && s.label != 1.0) var += s.weight * s.label * (1.0 - s.label);
  }
  stats.label_variance = var / w_sum;
  return stats;
}

BinStats combine_bin_stats(std::span<const BinStats> parts) {
  BinStats out;
  double wy = 0.0, wp = 0.0;
  for (const auto& b : parts) {
    out.count += b.count;
    wy += b.count * b.mean_label;
    wp += b.count * b.mean_prediction;
  }
  if (out.count <= 0.0) throw Error("empty bin");
  out.mean_label = wy / out.count;
  out.mean_prediction = wp / out.count;
  double second = 0.0;
  for (const auto& b : parts) {
    const double d = b.mean_label - out.mean_label;
    second += b.count * (b.label_variance + d * d);
  }
  out.label_variance = second / out.count;
  return out;
}

const char* to_string(DivisionKind kind) {
  switch (kind) {
    case DivisionKind::SortedUniformMass: return "sorted_uniform_mass";
    case DivisionKind::ShuffledUniformMass: return "shuffled_uniform_mass";
    case DivisionKind::EqualWidth: return "equal_width";
    case DivisionKind::FeaturePartition: return "feature_partition";
  }
  return "unknown";
}

std::vector<std::size_t> uniform_mass_sizes(std::size_t n, std::size_t bins) {
  if (bins == 0 || bins > n) throw Error("degenerate division");
  std::vector<std::size_t> sizes(bins, n / bins);
  const std::size_t extra = n % bins;
  for (std::size_t b = bins - extra; b < bins; ++b) ++sizes[b];
  return sizes;
}

IndexList stable_order(std::span<const double> key) {
  IndexList order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return order;
}

namespace {

DivisionScheme slice(const IndexList& order, std::size_t bins, DivisionKind kind) {
  DivisionScheme div;
  div.kind = kind;
  div.bins.reserve(bins);
  std::size_t pos = 0;
  for (auto size : uniform_mass_sizes(order.size(), bins)) {
    div.bins.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                          order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return div;
}

std::span<const double> require_key(std::optional<std::span<const double>> key, std::size_t n,
                                    DivisionKind kind) {
  if (!key) throw Error(std::string("make_division: ") + to_string(kind) + " needs a sort key");
  if (key->size() != n) throw Error("make_division: sort key length mismatch");
  return *key;
}

}  // namespace

DivisionScheme make_division_by_count(std::size_t n, std::size_t num_bins, DivisionKind kind, Rng& rng,
                                      std::optional<std::span<const double>> sort_key) {
  if (num_bins == 0 || num_bins > n) throw Error("degenerate division");
  switch (kind) {
    case DivisionKind::ShuffledUniformMass: {
      IndexList order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(order));
      return slice(order, num_bins, kind);
    }
    case DivisionKind::SortedUniformMass:
      return slice(stable_order(require_key(sort_key, n, kind)), num_bins, kind);
    case DivisionKind::EqualWidth: {
      const auto key = require_key(sort_key, n, kind);
      const auto [lo_it, hi_it] = std::minmax_element(key.begin(), key.end());
      const double lo = *lo_it, hi = *hi_it;
      std::vector<IndexList> buckets(num_bins);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t b = 0;
        if (hi > lo) {
          b = static_cast<std::size_t>((key[i] - lo) / (hi - lo) * static_cast<double>(num_bins));
          b = std::min(b, num_bins - 1);
        }
        buckets[b].push_back(i);
      }
      DivisionScheme div;
      div.kind = kind;
      for (auto& b : buckets) {
        if (!b.empty()) div.bins.push_back(std::move(b));
      }
      return div;
    }
    case DivisionKind::FeaturePartition:
      break;
  }
  throw Error("make_division: feature partitions are built from features, not counts");
}

DivisionScheme make_division(std::size_t n, std::size_t bin_size, DivisionKind kind, Rng& rng,
                             std::optional<std::span<const double>> sort_key) {
  if (bin_size == 0 || bin_size >= n || n / bin_size < 2) throw Error("degenerate division");
  return make_division_by_count(n, n / bin_size, kind, rng, sort_key);
}

FeatureValue prediction_bucket(double prediction, std::uint32_t buckets) {
  if (buckets == 0) return 0;
  const double scaled = std::floor(prediction * static_cast<double>(buckets));
  if (!(scaled > 0.0)) return 0;
  return std::min(static_cast<FeatureValue>(scaled), buckets - 1);
}

Aggregation aggregate_dataset_with_groups(const Dataset& dataset, std::uint32_t prediction_buckets) {
  struct Acc {
    double w = 0.0, wy = 0.0, wp = 0.0, wt = 0.0;
    bool has_truth = true;
  };
  std::map<std::vector<FeatureValue>, std::size_t> index;
  std::vector<Acc> acc;
  Aggregation out;
  out.dataset.feature_names = dataset.feature_names;
  out.dataset.feature_cardinalities = dataset.feature_cardinalities;
  out.group_of.resize(dataset.size());

  std::vector<FeatureValue> key;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    key = s.features;
    if (prediction_buckets > 0) key.push_back(prediction_bucket(s.prediction, prediction_buckets));
    auto [it, inserted] = index.try_emplace(key, acc.size());
    if (inserted) {
      acc.emplace_back();
      CalibrationSample row;
      row.features = s.features;
      out.dataset.samples.push_back(std::move(row));
    }
    auto& a = acc[it->second];
    a.w += s.weight;
    a.wy += s.weight * s.label;
    a.wp += s.weight * s.prediction;
    if (s.true_prob) {
      a.wt += s.weight * *s.true_prob;
    } else {
      a.has_truth = false;
    }
    out.group_of[i] = it->second;
  }
  for (std::size_t g = 0; g < acc.size(); ++g) {
    auto& row = out.dataset.samples[g];
    const auto& a = acc[g];
    row.weight = a.w;
    row.label = std::clamp(a.wy / a.w, 0.0, 1.0);
    row.prediction = std::clamp(a.wp / a.w, 0.0, 1.0);
    if (a.has_truth) row.true_prob = std::clamp(a.wt / a.w, 0.0, 1.0);
  }
  return out;
}

Dataset aggregate_dataset(const Dataset& dataset, std::uint32_t prediction_buckets) {
  return aggregate_dataset_with_groups(dataset, prediction_buckets).dataset;
}

}  // namespace mbct
