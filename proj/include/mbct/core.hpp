#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbct/error.hpp"
#include "mbct/rng.hpp"

namespace mbct {

using FeatureValue = std::uint32_t;
using IndexList = std::vector<std::size_t>;

/// One calibration row.
///
/// `label` is 0 or 1 for raw data. Rows produced by aggregate_dataset() carry
/// the group's weighted mean label instead, so everything downstream treats
/// it as a real in [0, 1] together with `weight`.
struct CalibrationSample {
  std::vector<FeatureValue> features;
  double prediction = 0.0;
  double label = 0.0;
  std::optional<double> true_prob;
  double weight = 1.0;
};

struct Dataset {
  std::vector<CalibrationSample> samples;
  std::vector<std::string> feature_names;
  std::vector<std::uint32_t> feature_cardinalities;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t num_features() const { return feature_cardinalities.size(); }

  /// Throws Error if any row breaks the dataset invariants.
  void validate() const;

  std::vector<double> predictions() const;
  std::vector<double> labels() const;
  std::vector<double> weights() const;
  /// Throws unless every row carries a true probability.
  std::vector<double> true_probs() const;
  double total_weight() const;
};

struct BinStats {
  double count = 0.0;            // weighted
  double mean_label = 0.0;
  double mean_prediction = 0.0;  // calibrated when a calibrated vector is given
  double label_variance = 0.0;
};

BinStats compute_bin_stats(const Dataset& dataset, std::span<const std::size_t> indices,
                           std::optional<std::span<const double>> calibrated = std::nullopt);

/// Weighted merge of disjoint bins.
BinStats combine_bin_stats(std::span<const BinStats> parts);

enum class DivisionKind { SortedUniformMass, ShuffledUniformMass, EqualWidth, FeaturePartition };

const char* to_string(DivisionKind kind);

struct DivisionScheme {
  std::vector<IndexList> bins;
  DivisionKind kind = DivisionKind::ShuffledUniformMass;

  std::size_t num_bins() const { return bins.size(); }
};

/// Bin sizes for `n` rows split into `bins` uniform-mass bins. Sizes differ by
/// at most one; the remainder goes to the trailing bins.
std::vector<std::size_t> uniform_mass_sizes(std::size_t n, std::size_t bins);

/// Division with floor(n / bin_size) bins. Requires at least two bins.
/// `sort_key` is required for SortedUniformMass and EqualWidth.
DivisionScheme make_division(std::size_t n, std::size_t bin_size, DivisionKind kind, Rng& rng,
                             std::optional<std::span<const double>> sort_key = std::nullopt);

/// Division into exactly `num_bins` bins (one bin is allowed here).
/// EqualWidth drops empty intervals and may return fewer bins.
DivisionScheme make_division_by_count(std::size_t n, std::size_t num_bins, DivisionKind kind,
                                      Rng& rng,
                                      std::optional<std::span<const double>> sort_key = std::nullopt);

/// Ascending order of `key`, ties broken by index.
IndexList stable_order(std::span<const double> key);

/// Equal-width bucket of a probability: floor(x * buckets), 1.0 clamps into
/// the last bucket.
FeatureValue prediction_bucket(double prediction, std::uint32_t buckets);

/// Merges rows sharing a feature vector and prediction bucket into one
/// weighted row (weight = summed weight, label/prediction = weighted means).
/// `prediction_buckets == 0` groups on features alone. Group order follows
/// first appearance.
Dataset aggregate_dataset(const Dataset& dataset, std::uint32_t prediction_buckets = 100);

struct Aggregation {
  Dataset dataset;
  std::vector<std::size_t> group_of;  // raw row -> aggregated row
};

Aggregation aggregate_dataset_with_groups(const Dataset& dataset,
                                          std::uint32_t prediction_buckets = 100);

}  // namespace mbct
