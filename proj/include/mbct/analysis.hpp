#pragma once

// Diagnostics built on the metrics: sub-group PUD tables for inspecting
// feature-level bias inside bins, and MVCE as a function of bin size.

#include <cstddef>
#include <span>
#include <vector>

#include "mbct/core.hpp"
#include "mbct/metrics.hpp"

namespace mbct {

enum class SubgroupOrder {
  Features,  // rows ordered by feature vector (row index breaks ties), then cut
  Shuffled,  // rows shuffled with the supplied seed, then cut
};

/// PUD of `groups` uniform-mass sub-groups of one bin. NaN for a sub-group
/// whose mean label is zero.
std::vector<double> subgroup_puds(const Dataset& dataset, std::span<const std::size_t> bin,
                                  std::span<const double> calibrated, std::size_t groups,
                                  SubgroupOrder order = SubgroupOrder::Features, std::uint64_t seed = 0);

struct PudRow {
  std::size_t bin = 0;
  double count = 0.0;
  double pud = 0.0;
  std::vector<double> subgroups;
};

/// One row per non-empty bin with at least `groups` rows.
std::vector<PudRow> pud_table(const Dataset& dataset, std::span<const IndexList> bins,
                              std::span<const double> calibrated, std::size_t groups,
                              SubgroupOrder order = SubgroupOrder::Features, std::uint64_t seed = 0);

struct CurvePoint {
  std::size_t bin_size = 0;
  double mvce = 0.0;
};

/// MVCE at each feasible bin size (sizes leaving fewer than two bins skipped).
std::vector<CurvePoint> mvce_bin_size_curve(const Dataset& dataset, std::span<const double> calibrated,
                                            std::span<const std::size_t> bin_sizes, const MetricConfig& config);

}  // namespace mbct
