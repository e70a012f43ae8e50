#pragma once

// Monte-Carlo harness for the bias of calibration metrics against a known
// ground truth, plus the synthetic feature-bias fixture used end to end.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbct/core.hpp"
#include "mbct/kernels.hpp"
#include "mbct/rng.hpp"

namespace mbct {

/// c ~ Beta(beta_a, beta_b) is the calibrated prediction, E[Y | c] = c^q.
struct SimScenario {
  double beta_a = 0.2;
  double beta_b = 0.7;
  double truth_exponent = 2.0;
  double p = 2.0;

  void validate() const;
};

inline constexpr SimScenario kMainScenario{0.2, 0.7, 2.0, 2.0};
inline constexpr SimScenario kSquareScenario{0.4, 0.7, 2.0, 2.0};
inline constexpr SimScenario kCubeScenario{0.6, 0.7, 3.0, 2.0};

enum class SimMetric { Ece, EceSweep, Mvce };
const char* to_string(SimMetric m);
SimMetric parse_sim_metric(std::string_view name);

struct SimResult {
  std::string metric;
  std::size_t n = 0;
  std::size_t n_bins = 0;
  std::size_t m = 0;
  double e_bias_hat = 0.0;
  double tce_analytic = 0.0;
  std::optional<double> tce_published;
  double metric_mean = 0.0;  // mean metric value over the experiments
};

Dataset sample_scenario(const SimScenario& scenario, std::size_t n, Rng& rng);

/// E[c^k] for c ~ Beta(a, b).
double beta_raw_moment(double a, double b, double k);

/// l_p distance between c and c^q under the Beta law. Closed form through
/// raw moments for integer q and p in {1, 2}, adaptive quadrature otherwise.
double analytic_tce(const SimScenario& scenario);
double analytic_tce_quadrature(const SimScenario& scenario);

/// Published TCE of the main scenario, kept for comparison only.
std::optional<double> published_tce(const SimScenario& scenario);

/// Metric under study: (dataset, calibrated, n_bins, p, seed) -> value.
using SimMetricFn =
    std::function<double(const Dataset&, std::span<const double>, std::size_t, double, std::uint64_t)>;
SimMetricFn sim_metric_fn(SimMetric metric, std::size_t r = 100);

/// Mean |metric - TCE| over m independent draws of n samples. MVCE uses
/// bin size n / n_bins so both families see the same number of bins.
SimResult estimate_e_bias(const SimScenario& scenario, SimMetric metric, std::size_t n, std::size_t n_bins,
                          std::size_t m, Rng& rng, kernels::Exec exec = kernels::Exec::Parallel);
SimResult estimate_e_bias(const SimScenario& scenario, std::string_view name, const SimMetricFn& metric,
                          std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng,
                          kernels::Exec exec = kernels::Exec::Parallel);

struct NamedSimMetric {
  std::string name;
  SimMetricFn fn;
};

/// Several metrics scored on the same m draws. With one metric this is
/// estimate_e_bias exactly.
std::vector<SimResult> estimate_e_bias_paired(const SimScenario& scenario, std::span<const NamedSimMetric> metrics,
                                              std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng,
                                              kernels::Exec exec = kernels::Exec::Parallel);
std::vector<SimResult> estimate_e_bias_paired(const SimScenario& scenario, std::span<const SimMetric> metrics,
                                              std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng,
                                              kernels::Exec exec = kernels::Exec::Parallel, std::size_t r = 100);

/// Row-major over bin_counts, then sample_counts.
std::vector<SimResult> sweep_grid(const SimScenario& scenario, SimMetric metric,
                                  std::span<const std::size_t> bin_counts, std::span<const std::size_t> sample_counts,
                                  std::size_t m, Rng& rng, kernels::Exec exec = kernels::Exec::Parallel);

struct FeatureBiasOptions {
  /// One map per bias column: value -> multiplier. A row's multiplier is
  /// the product over bias columns; values are drawn uniformly.
  std::vector<std::map<FeatureValue, double>> bias_features;
  std::size_t noise_features = 2;
  std::uint32_t noise_cardinality = 3;
  double prediction_lo = 0.05;  // prediction = lo + (hi - lo) * Beta(2, 2)
  double prediction_hi = 0.6;
};

/// Bias columns first, then noise columns. true_prob = prediction / multiplier.
Dataset synthetic_feature_bias_dataset(std::size_t n, const FeatureBiasOptions& options, Rng& rng);
Dataset synthetic_feature_bias_dataset(std::size_t n, const std::map<FeatureValue, double>& group_scalers, Rng& rng);

}  // namespace mbct
