#include "mbct/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "logistic.hpp"

namespace mbct {
namespace {

double clamp_prob(double x) { return std::clamp(x, kProbabilityFloor, 1.0 - kProbabilityFloor); }

double weighted_label_mean(const Dataset& dataset) {
  double w = 0.0, wy = 0.0;
  for (const auto& s : dataset.samples) {
    w += s.weight;
    wy += s.weight * s.label;
  }
  return wy / w;
}

void require_two_classes(const Dataset& dataset, const char* who) {
  if (dataset.empty()) throw Error(std::string(who) + ": empty dataset");
  const double base = weighted_label_mean(dataset);
  if (!(base > 0.0 && base < 1.0)) throw Error(std::string(who) + ": single-class labels");
}

bool constant_column(const std::vector<double>& column) {
  return std::all_of(column.begin(), column.end(), [&](double v) { return v == column.front(); });
}

}  // namespace

std::vector<double> Calibrator::apply_all(const Dataset& dataset) const {
  std::vector<double> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out[i] = apply(dataset.samples[i].prediction, dataset.samples[i].features);
  }
  return out;
}

// --- Platt -----------------------------------------------------------------

PlattParams platt_fit(const Dataset& dataset) {
  require_two_classes(dataset, "platt");
  std::vector<double> z(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) z[i] = detail::logit(clamp_prob(dataset.samples[i].prediction));
  const auto labels = dataset.labels();
  const auto weights = dataset.weights();
  if (constant_column(z)) return {0.0, detail::logit(weighted_label_mean(dataset))};
  const std::vector<std::vector<double>> columns{std::move(z)};
  const auto fit = detail::fit_logistic(columns, labels, weights);
  return {fit.coefficients[0], fit.coefficients[1]};
}

double platt_apply(const PlattParams& params, double prediction) {
  return detail::sigmoid(params.a * detail::logit(clamp_prob(prediction)) + params.b);
}

// --- Beta ------------------------------------------------------------------

BetaParams beta_fit(const Dataset& dataset) {
  require_two_classes(dataset, "beta");
  std::vector<double> log_x(dataset.size()), neg_log_1mx(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double x = clamp_prob(dataset.samples[i].prediction);
    log_x[i] = std::log(x);
    neg_log_1mx[i] = -std::log1p(-x);
  }
  const auto labels = dataset.labels();
  const auto weights = dataset.weights();
  const double intercept_only = detail::logit(weighted_label_mean(dataset));
  if (constant_column(log_x)) return {0.0, 0.0, intercept_only};

  const std::vector<std::vector<double>> both{log_x, neg_log_1mx};
  const auto full = detail::fit_logistic(both, labels, weights);
  BetaParams out{full.coefficients[0], full.coefficients[1], full.coefficients[2]};
  if (out.a >= 0.0 && out.b >= 0.0) return out;

  // Drop the offending covariate and refit on the other one.
  const bool keep_a = out.a >= 0.0;
  const std::vector<std::vector<double>> single{keep_a ? log_x : neg_log_1mx};
  const auto fit = detail::fit_logistic(single, labels, weights);
  if (fit.coefficients[0] < 0.0) return {0.0, 0.0, intercept_only};
  return keep_a ? BetaParams{fit.coefficients[0], 0.0, fit.coefficients[1]}
                : BetaParams{0.0, fit.coefficients[0], fit.coefficients[1]};
}

double beta_apply(const BetaParams& params, double prediction) {
  const double x = clamp_prob(prediction);
  return detail::sigmoid(params.a * std::log(x) - params.b * std::log1p(-x) + params.c);
}

// --- binning ---------------------------------------------------------------

BinTable fit_bin_table(std::span<const double> values, std::span<const double> targets,
                       std::span<const double> weights, std::size_t n_bins) {
  const std::size_t n = values.size();
  if (targets.size() != n || weights.size() != n) throw Error("binning: length mismatch");
  if (n_bins == 0 || n_bins > n) throw Error("binning: n_bins exceeds dataset size");
  const auto order = stable_order(values);

  struct Range {
    std::size_t lo, hi;  // positions in `order`
  };
  std::vector<Range> ranges;
  std::size_t pos = 0;
  for (auto size : uniform_mass_sizes(n, n_bins)) {
    const Range next{pos, pos + size};
    pos += size;
    // A tie across the edge would make the boundary ambiguous; pool instead.
    if (!ranges.empty() && values[order[ranges.back().hi - 1]] == values[order[next.lo]]) {
      ranges.back().hi = next.hi;
    } else {
      ranges.push_back(next);
    }
  }

  BinTable table;
  for (std::size_t b = 0; b < ranges.size(); ++b) {
    double w = 0.0, wt = 0.0;
    for (std::size_t k = ranges[b].lo; k < ranges[b].hi; ++k) {
      w += weights[order[k]];
      wt += weights[order[k]] * targets[order[k]];
    }
    table.outputs.push_back(std::clamp(wt / w, 0.0, 1.0));
    if (b + 1 < ranges.size()) {
      const double left = values[order[ranges[b].hi - 1]];
      const double right = values[order[ranges[b + 1].lo]];
      double mid = left + 0.5 * (right - left);
      if (!(mid > left)) mid = right;
      table.boundaries.push_back(mid);
    }
  }
  return table;
}

std::size_t bin_table_index(const BinTable& table, double value) {
  return static_cast<std::size_t>(std::upper_bound(table.boundaries.begin(), table.boundaries.end(), value) -
                                  table.boundaries.begin());
}

double bin_table_apply(const BinTable& table, double value) {
  if (table.outputs.empty()) throw Error("binning: calibrator is not fitted");
  return table.outputs[bin_table_index(table, value)];
}

BinTable histogram_fit(const Dataset& dataset, std::size_t n_bins) {
  if (dataset.empty()) throw Error("histogram: empty dataset");
  const auto preds = dataset.predictions();
  const auto labels = dataset.labels();
  const auto weights = dataset.weights();
  return fit_bin_table(preds, labels, weights, n_bins);
}

ScalingBinningParams scaling_binning_fit(const Dataset& dataset, std::size_t n_bins) {
  if (n_bins == 0 || n_bins > dataset.size()) throw Error("scaling-binning: n_bins exceeds dataset size");
  ScalingBinningParams params;
  params.scaler = platt_fit(dataset);
  std::vector<double> scaled(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) scaled[i] = platt_apply(params.scaler, dataset.samples[i].prediction);
  const auto weights = dataset.weights();
  params.bins = fit_bin_table(scaled, scaled, weights, n_bins);
  return params;
}

double scaling_binning_apply(const ScalingBinningParams& params, double prediction) {
  return bin_table_apply(params.bins, platt_apply(params.scaler, prediction));
}

// --- isotonic --------------------------------------------------------------

std::vector<double> pav(std::span<const double> sorted_y, std::span<const double> weights,
                        std::span<const double> sorted_x) {
  const std::size_t n = sorted_y.size();
  if (weights.size() != n || (!sorted_x.empty() && sorted_x.size() != n)) throw Error("pav: length mismatch");
  struct Block {
    std::size_t lo, hi;
    double wy, w;
  };
  std::vector<Block> stack;
  std::size_t i = 0;
  while (i < n) {
    Block b{i, i, 0.0, 0.0};
    // Equal x must share a value, so tied rows enter as one block.
    do {
      b.wy += weights[b.hi] * sorted_y[b.hi];
      b.w += weights[b.hi];
      ++b.hi;
    } while (!sorted_x.empty() && b.hi < n && sorted_x[b.hi] == sorted_x[i]);
    i = b.hi;
    stack.push_back(b);
    while (stack.size() > 1) {
      const auto& top = stack.back();
      const auto& below = stack[stack.size() - 2];
      if (below.wy * top.w <= top.wy * below.w) break;
      Block merged{below.lo, top.hi, below.wy + top.wy, below.w + top.w};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  std::vector<double> fitted(n);
  for (const auto& b : stack) {
    // Recompute in index order so the value depends only on the block range.
    double wy = 0.0, w = 0.0;
    for (std::size_t k = b.lo; k < b.hi; ++k) {
      wy += weights[k] * sorted_y[k];
      w += weights[k];
    }
    std::fill(fitted.begin() + static_cast<std::ptrdiff_t>(b.lo), fitted.begin() + static_cast<std::ptrdiff_t>(b.hi),
              wy / w);
  }
  return fitted;
}

IsotonicFit isotonic_fit(const Dataset& dataset) {
  if (dataset.empty()) throw Error("isotonic: empty dataset");
  const auto preds = dataset.predictions();
  const auto order = stable_order(preds);
  std::vector<double> x(order.size()), y(order.size()), w(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& s = dataset.samples[order[k]];
    x[k] = s.prediction;
    y[k] = s.label;
    w[k] = s.weight;
  }
  const auto fitted = pav(y, w, x);
  IsotonicFit fit;
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    if (k == 0 || fitted[k] != fitted[k - 1]) {
      fit.block_starts.push_back(x[k]);
      fit.values.push_back(fitted[k]);
    }
  }
  return fit;
}

double isotonic_apply(const IsotonicFit& fit, double prediction) {
  if (fit.values.empty()) throw Error("isotonic: calibrator is not fitted");
  const auto it = std::upper_bound(fit.block_starts.begin(), fit.block_starts.end(), prediction);
  if (it == fit.block_starts.begin()) return fit.values.front();
  return fit.values[static_cast<std::size_t>(it - fit.block_starts.begin()) - 1];
}

// --- serialization ---------------------------------------------------------

nlohmann::json PlattCalibrator::to_json() const { return {{"kind", "platt"}, {"a", params_.a}, {"b", params_.b}}; }

nlohmann::json BetaCalibrator::to_json() const {
  return {{"kind", "beta"}, {"a", params_.a}, {"b", params_.b}, {"c", params_.c}};
}

nlohmann::json HistogramCalibrator::to_json() const {
  return {{"kind", "histogram"}, {"boundaries", table_.boundaries}, {"outputs", table_.outputs}};
}

nlohmann::json IsotonicCalibrator::to_json() const {
  return {{"kind", "isotonic"}, {"block_starts", fit_.block_starts}, {"values", fit_.values}};
}

nlohmann::json ScalingBinningCalibrator::to_json() const {
  return {{"kind", "scaling-binning"},
          {"a", params_.scaler.a},
          {"b", params_.scaler.b},
          {"boundaries", params_.bins.boundaries},
          {"outputs", params_.bins.outputs}};
}

}  // namespace mbct
