#include "mbct/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mbct/error.hpp"

namespace mbct {

std::vector<double> subgroup_puds(const Dataset& dataset, std::span<const std::size_t> bin,
                                  std::span<const double> calibrated, std::size_t groups, SubgroupOrder order,
                                  std::uint64_t seed) {
  if (groups < 1 || bin.size() < groups) throw Error("subgroup PUD: bin smaller than the number of sub-groups");
  IndexList rows(bin.begin(), bin.end());
  if (order == SubgroupOrder::Features) {
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      const auto& fa = dataset.samples[a].features;
      const auto& fb = dataset.samples[b].features;
      return fa != fb ? fa < fb : a < b;
    });
  } else {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(rows));
  }
  const auto sizes = uniform_mass_sizes(rows.size(), groups);
  std::vector<double> out;
  std::size_t at = 0;
  for (auto size : sizes) {
    const std::span<const std::size_t> part(rows.data() + at, size);
    at += size;
    double w = 0.0, wy = 0.0, wp = 0.0;
    for (auto i : part) {
      const auto& s = dataset.samples[i];
      w += s.weight;
      wy += s.weight * s.label;
      wp += s.weight * calibrated[i];
    }
    out.push_back(wy > 0.0 ? (wp / w) / (wy / w) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::vector<PudRow> pud_table(const Dataset& dataset, std::span<const IndexList> bins,
                              std::span<const double> calibrated, std::size_t groups, SubgroupOrder order,
                              std::uint64_t seed) {
  std::vector<PudRow> out;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].size() < std::max<std::size_t>(groups, 1)) continue;
    PudRow row;
    row.bin = b;
    const auto stats = compute_bin_stats(dataset, bins[b], calibrated);
    row.count = stats.count;
    row.pud = stats.mean_label > 0.0 ? stats.mean_prediction / stats.mean_label
                                     : std::numeric_limits<double>::quiet_NaN();
    row.subgroups = subgroup_puds(dataset, bins[b], calibrated, groups, order, seed);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<CurvePoint> mvce_bin_size_curve(const Dataset& dataset, std::span<const double> calibrated,
                                            std::span<const std::size_t> bin_sizes, const MetricConfig& config) {
  std::vector<CurvePoint> out;
  for (auto size : bin_sizes) {
    if (size < 1 || dataset.size() / size < 2) continue;
    MetricConfig cfg = config;
    cfg.bin_size = size;
    out.push_back({size, mvce(dataset, calibrated, cfg)});
  }
  return out;
}

}  // namespace mbct
