#include "mbct/sim.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mbct/error.hpp"
#include "mbct/metrics.hpp"

namespace mbct {

void SimScenario::validate() const {
  if (!(beta_a > 0.0 && beta_b > 0.0)) throw Error("scenario: Beta shapes must be positive");
  if (!(truth_exponent > 0.0)) throw Error("scenario: q must be positive");
  if (!(p >= 1.0)) throw Error("scenario: p must be >= 1");
}

const char* to_string(SimMetric m) {
  switch (m) {
    case SimMetric::Ece: return "ece";
    case SimMetric::EceSweep: return "ece_sweep";
    case SimMetric::Mvce: return "mvce";
  }
  return "?";
}

SimMetric parse_sim_metric(std::string_view name) {
  if (name == "ece") return SimMetric::Ece;
  if (name == "ece_sweep" || name == "sweep") return SimMetric::EceSweep;
  if (name == "mvce") return SimMetric::Mvce;
  throw Error("unknown metric '" + std::string(name) + "' (expected ece, ece_sweep or mvce)");
}

Dataset sample_scenario(const SimScenario& scenario, std::size_t n, Rng& rng) {
  scenario.validate();
  if (n < 1) throw Error("sample_scenario: n must be >= 1");
  Dataset ds;
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    const double c = rng.beta(scenario.beta_a, scenario.beta_b);
    const double truth = std::pow(c, scenario.truth_exponent);
    s.prediction = c;
    s.true_prob = truth;
    s.label = rng.bernoulli(truth) ? 1.0 : 0.0;
  }
  return ds;
}

double beta_raw_moment(double a, double b, double k) {
  if (k == std::floor(k) && k >= 0.0 && k < 64.0) {
    double m = 1.0;
    for (int i = 0; i < static_cast<int>(k); ++i) m *= (a + i) / (a + b + i);
    return m;
  }
  return std::exp(std::lgamma(a + k) + std::lgamma(a + b) - std::lgamma(a) - std::lgamma(a + b + k));
}

double analytic_tce_quadrature(const SimScenario& s) {
  s.validate();
  const double log_norm = std::log(boost::math::beta(s.beta_a, s.beta_b));
  auto integrand = [&](double c) {
    if (c <= 0.0 || c >= 1.0) return 0.0;
    const double gap = std::abs(c - std::pow(c, s.truth_exponent));
    if (gap == 0.0) return 0.0;
    return std::exp(s.p * std::log(gap) + (s.beta_a - 1.0) * std::log(c) + (s.beta_b - 1.0) * std::log1p(-c) -
                    log_norm);
  };
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double value = integrator.integrate(integrand, 0.0, 1.0, 1e-10);
  return std::pow(value, 1.0 / s.p);
}

double analytic_tce(const SimScenario& s) {
  s.validate();
  const double q = s.truth_exponent;
  const bool integer_q = q == std::floor(q);
  if (integer_q && s.p == 2.0) {
    const double v = beta_raw_moment(s.beta_a, s.beta_b, 2.0) - 2.0 * beta_raw_moment(s.beta_a, s.beta_b, q + 1.0) +
                     beta_raw_moment(s.beta_a, s.beta_b, 2.0 * q);
    return std::sqrt(std::max(0.0, v));
  }
  if (integer_q && s.p == 1.0) {
    // c - c^q keeps one sign on [0, 1] for q >= 1.
    return std::abs(beta_raw_moment(s.beta_a, s.beta_b, 1.0) - beta_raw_moment(s.beta_a, s.beta_b, q));
  }
  return analytic_tce_quadrature(s);
}

std::optional<double> published_tce(const SimScenario& s) {
  if (s.beta_a == 0.2 && s.beta_b == 0.7 && s.truth_exponent == 2.0) return 0.0868;
  return std::nullopt;
}

SimMetricFn sim_metric_fn(SimMetric metric, std::size_t r) {
  switch (metric) {
    case SimMetric::Ece:
      return [](const Dataset& ds, std::span<const double> cal, std::size_t bins, double p, std::uint64_t) {
        return ece_n(ds, cal, bins, p);
      };
    case SimMetric::EceSweep:
      return [](const Dataset& ds, std::span<const double> cal, std::size_t, double p, std::uint64_t) {
        return ece_sweep(ds, cal, p).value;
      };
    case SimMetric::Mvce:
      return [r](const Dataset& ds, std::span<const double> cal, std::size_t bins, double p, std::uint64_t seed) {
        MetricConfig cfg;
        cfg.p = p;
        cfg.r = r;
        cfg.bin_size = ds.size() / bins;
        cfg.seed = seed;
        cfg.exec = kernels::Exec::Serial;
        return mvce(ds, cal, cfg);
      };
  }
  throw Error("unknown metric");
}

std::vector<SimResult> estimate_e_bias_paired(const SimScenario& scenario, std::span<const NamedSimMetric> metrics,
                                              std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng,
                                              kernels::Exec exec) {
  scenario.validate();
  if (m < 1) throw Error("estimate_e_bias: m must be >= 1");
  if (metrics.empty()) throw Error("estimate_e_bias: no metric");
  if (n_bins < 2 || n / n_bins < 1) throw Error("estimate_e_bias: infeasible binning (" + std::to_string(n) +
                                                " samples, " + std::to_string(n_bins) + " bins)");
  const double truth = analytic_tce(scenario);
  const Rng base(rng.next_u64());
  const std::size_t k = metrics.size();
  std::vector<double> value(m * k);
  const auto count = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic) if (exec == kernels::Exec::Parallel)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    Rng local = base.derive(iu);
    const auto ds = sample_scenario(scenario, n, local);
    const auto cal = ds.predictions();
    for (std::size_t j = 0; j < k; ++j) value[iu * k + j] = metrics[j].fn(ds, cal, n_bins, scenario.p, local.next_u64());
  }
  std::vector<SimResult> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& res = out[j];
    res.metric = metrics[j].name;
    res.n = n;
    res.n_bins = n_bins;
    res.m = m;
    res.tce_analytic = truth;
    res.tce_published = published_tce(scenario);
    double dev_sum = 0.0, val_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dev_sum += std::abs(value[i * k + j] - truth);
      val_sum += value[i * k + j];
    }
    res.e_bias_hat = dev_sum / static_cast<double>(m);
    res.metric_mean = val_sum / static_cast<double>(m);
  }
  return out;
}

std::vector<SimResult> estimate_e_bias_paired(const SimScenario& scenario, std::span<const SimMetric> metrics,
                                              std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng,
                                              kernels::Exec exec, std::size_t r) {
  std::vector<NamedSimMetric> named;
  for (auto metric : metrics) named.push_back({to_string(metric), sim_metric_fn(metric, r)});
  return estimate_e_bias_paired(scenario, named, n, n_bins, m, rng, exec);
}

SimResult estimate_e_bias(const SimScenario& scenario, std::string_view name, const SimMetricFn& metric,
                          std::size_t n, std::size_t n_bins, std::size_t m, Rng& rng, kernels::Exec exec) {
  const NamedSimMetric one{std::string(name), metric};
  return estimate_e_bias_paired(scenario, std::span<const NamedSimMetric>(&one, 1), n, n_bins, m, rng, exec)[0];
}

SimResult estimate_e_bias(const SimScenario& scenario, SimMetric metric, std::size_t n, std::size_t n_bins,
                          std::size_t m, Rng& rng, kernels::Exec exec) {
  return estimate_e_bias(scenario, to_string(metric), sim_metric_fn(metric), n, n_bins, m, rng, exec);
}

std::vector<SimResult> sweep_grid(const SimScenario& scenario, SimMetric metric,
                                  std::span<const std::size_t> bin_counts, std::span<const std::size_t> sample_counts,
                                  std::size_t m, Rng& rng, kernels::Exec exec) {
  if (bin_counts.empty() || sample_counts.empty()) throw Error("sweep_grid: empty grid");
  std::vector<SimResult> out;
  out.reserve(bin_counts.size() * sample_counts.size());
  for (auto bins : bin_counts) {
    for (auto n : sample_counts) out.push_back(estimate_e_bias(scenario, metric, n, bins, m, rng, exec));
  }
  return out;
}

Dataset synthetic_feature_bias_dataset(std::size_t n, const FeatureBiasOptions& options, Rng& rng) {
  if (!(options.prediction_lo >= 0.0 && options.prediction_lo < options.prediction_hi &&
        options.prediction_hi <= 1.0)) {
    throw Error("feature bias fixture: prediction range must satisfy 0 <= lo < hi <= 1");
  }
  double min_multiplier = 1.0;
  for (const auto& column : options.bias_features) {
    if (column.empty()) throw Error("feature bias fixture: empty bias column");
    double column_min = std::numeric_limits<double>::infinity();
    for (const auto& [value, k] : column) {
      if (!(k > 0.0) || !std::isfinite(k)) throw Error("invalid multiplier: must be positive and finite");
      column_min = std::min(column_min, k);
    }
    min_multiplier *= column_min;
  }
  if (options.prediction_hi / min_multiplier > 1.0) {
    throw Error("invalid multiplier: prediction / multiplier exceeds 1");
  }
  if (options.noise_features > 0 && options.noise_cardinality < 1) {
    throw Error("feature bias fixture: noise cardinality must be >= 1");
  }

  Dataset ds;
  std::vector<std::vector<std::pair<FeatureValue, double>>> columns;
  for (std::size_t c = 0; c < options.bias_features.size(); ++c) {
    const auto& column = options.bias_features[c];
    columns.emplace_back(column.begin(), column.end());
    ds.feature_names.push_back("bias_" + std::to_string(c));
    ds.feature_cardinalities.push_back(column.rbegin()->first + 1);
  }
  for (std::size_t c = 0; c < options.noise_features; ++c) {
    ds.feature_names.push_back("noise_" + std::to_string(c));
    ds.feature_cardinalities.push_back(options.noise_cardinality);
  }
  ds.samples.resize(n);
  const double width = options.prediction_hi - options.prediction_lo;
  for (auto& s : ds.samples) {
    double multiplier = 1.0;
    for (const auto& column : columns) {
      const auto& [value, k] = column[rng.below(column.size())];
      s.features.push_back(value);
      multiplier *= k;
    }
    for (std::size_t c = 0; c < options.noise_features; ++c) {
      s.features.push_back(static_cast<FeatureValue>(rng.below(options.noise_cardinality)));
    }
    s.prediction = options.prediction_lo + width * rng.beta(2.0, 2.0);
    s.true_prob = std::min(1.0, s.prediction / multiplier);
    s.label = rng.bernoulli(*s.true_prob) ? 1.0 : 0.0;
  }
  return ds;
}

Dataset synthetic_feature_bias_dataset(std::size_t n, const std::map<FeatureValue, double>& group_scalers, Rng& rng) {
  FeatureBiasOptions options;
  options.bias_features.push_back(group_scalers);
  return synthetic_feature_bias_dataset(n, options, rng);
}

}  // namespace mbct
