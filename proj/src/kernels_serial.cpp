#include <cmath>

#include "mbct/core.hpp"
#include "mbct/kernels.hpp"

namespace mbct::kernels {

Residuals make_residuals(std::span<const double> calibrated, std::span<const double> labels,
                         std::span<const double> weights) {
  if (calibrated.size() != labels.size() || labels.size() != weights.size()) {
    throw Error("residuals: length mismatch");
  }
  Residuals r;
  r.weighted.resize(labels.size());
  r.weight.assign(weights.begin(), weights.end());
  for (std::size_t i = 0; i < labels.size(); ++i) r.weighted[i] = weights[i] * (calibrated[i] - labels[i]);
  return r;
}

double power_mean(std::span<const double> values, double p) {
  if (values.empty()) throw Error("power_mean: no values");
  double acc = 0.0;
  for (double v : values) acc += std::pow(v, p);
  return std::pow(acc / static_cast<double>(values.size()), 1.0 / p);
}

namespace serial {

std::vector<double> shuffled_division_mean_pce(const Residuals& residuals, std::size_t bin_size,
                                               std::span<const std::uint64_t> seeds) {
  std::vector<double> out;
  out.reserve(seeds.size());
  for (auto seed : seeds) {
    Rng rng(seed);
    const auto div = make_division(residuals.size(), bin_size, DivisionKind::ShuffledUniformMass, rng);
    double total = 0.0;
    for (const auto& bin : div.bins) {
      double r = 0.0, w = 0.0;
      for (auto i : bin) {
        r += residuals.weighted[i];
        w += residuals.weight[i];
      }
      total += std::abs(r / w);
    }
    out.push_back(total / static_cast<double>(div.num_bins()));
  }
  return out;
}

}  // namespace serial
}  // namespace mbct::kernels
