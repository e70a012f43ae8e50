#pragma once

#include <json.hpp>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mbct/core.hpp"

namespace mbct {

/// Inputs to logistic families are clamped into [kProbabilityFloor, 1 - kProbabilityFloor].
inline constexpr double kProbabilityFloor = 1e-6;

struct PlattParams {
  double a = 1.0;  // slope on logit(prediction)
  double b = 0.0;  // intercept
};

struct BetaParams {
  double a = 1.0;  // on ln(x), >= 0
  double b = 1.0;  // on -ln(1-x), >= 0
  double c = 0.0;
};

/// Step table over the prediction axis. A prediction x falls in bin
/// upper_bound(boundaries, x); outputs.size() == boundaries.size() + 1.
struct BinTable {
  std::vector<double> boundaries;
  std::vector<double> outputs;
};

/// Non-decreasing step function: value of the last block whose start is <= x,
/// first block below all starts.
struct IsotonicFit {
  std::vector<double> block_starts;
  std::vector<double> values;
};

struct ScalingBinningParams {
  PlattParams scaler;
  BinTable bins;  // over scaled values
};

PlattParams platt_fit(const Dataset& dataset);
double platt_apply(const PlattParams& params, double prediction);

BetaParams beta_fit(const Dataset& dataset);
double beta_apply(const BetaParams& params, double prediction);

/// Sorted uniform-mass bins over `values`, each bin emitting the weighted mean
/// of `targets`. Bins whose edge predictions tie are merged so boundaries stay
/// strictly increasing.
BinTable fit_bin_table(std::span<const double> values, std::span<const double> targets,
                       std::span<const double> weights, std::size_t n_bins);
double bin_table_apply(const BinTable& table, double value);
std::size_t bin_table_index(const BinTable& table, double value);

BinTable histogram_fit(const Dataset& dataset, std::size_t n_bins);

IsotonicFit isotonic_fit(const Dataset& dataset);
/// Pool-adjacent-violators on already-sorted x. Returns fitted values per row.
std::vector<double> pav(std::span<const double> sorted_y, std::span<const double> weights,
                        std::span<const double> sorted_x = {});
double isotonic_apply(const IsotonicFit& fit, double prediction);

ScalingBinningParams scaling_binning_fit(const Dataset& dataset, std::size_t n_bins);
double scaling_binning_apply(const ScalingBinningParams& params, double prediction);

/// Common surface of every post-hoc calibrator, including MBCT.
class Calibrator {
 public:
  virtual ~Calibrator() = default;

  virtual std::string_view kind() const = 0;
  virtual void fit(const Dataset& dataset) = 0;
  virtual double apply(double prediction, std::span<const FeatureValue> features) const = 0;
  virtual nlohmann::json to_json() const = 0;

  std::vector<double> apply_all(const Dataset& dataset) const;
};

class PlattCalibrator final : public Calibrator {
 public:
  PlattCalibrator() = default;
  explicit PlattCalibrator(PlattParams params) : params_(params) {}
  std::string_view kind() const override { return "platt"; }
  void fit(const Dataset& dataset) override { params_ = platt_fit(dataset); }
  double apply(double prediction, std::span<const FeatureValue>) const override {
    return platt_apply(params_, prediction);
  }
  nlohmann::json to_json() const override;
  const PlattParams& params() const { return params_; }

 private:
  PlattParams params_;
};

class BetaCalibrator final : public Calibrator {
 public:
  BetaCalibrator() = default;
  explicit BetaCalibrator(BetaParams params) : params_(params) {}
  std::string_view kind() const override { return "beta"; }
  void fit(const Dataset& dataset) override { params_ = beta_fit(dataset); }
  double apply(double prediction, std::span<const FeatureValue>) const override {
    return beta_apply(params_, prediction);
  }
  nlohmann::json to_json() const override;
  const BetaParams& params() const { return params_; }

 private:
  BetaParams params_;
};

class HistogramCalibrator final : public Calibrator {
 public:
  explicit HistogramCalibrator(std::size_t n_bins = 10) : n_bins_(n_bins) {}
  explicit HistogramCalibrator(BinTable table) : n_bins_(table.outputs.size()), table_(std::move(table)) {}
  std::string_view kind() const override { return "histogram"; }
  void fit(const Dataset& dataset) override { table_ = histogram_fit(dataset, n_bins_); }
  double apply(double prediction, std::span<const FeatureValue>) const override {
    return bin_table_apply(table_, prediction);
  }
  nlohmann::json to_json() const override;
  const BinTable& table() const { return table_; }

 private:
  std::size_t n_bins_;
  BinTable table_;
};

class IsotonicCalibrator final : public Calibrator {
 public:
  IsotonicCalibrator() = default;
  explicit IsotonicCalibrator(IsotonicFit fit) : fit_(std::move(fit)) {}
  std::string_view kind() const override { return "isotonic"; }
  void fit(const Dataset& dataset) override { fit_ = isotonic_fit(dataset); }
  double apply(double prediction, std::span<const FeatureValue>) const override {
    return isotonic_apply(fit_, prediction);
  }
  nlohmann::json to_json() const override;
  const IsotonicFit& params() const { return fit_; }

 private:
  IsotonicFit fit_;
};

class ScalingBinningCalibrator final : public Calibrator {
 public:
  explicit ScalingBinningCalibrator(std::size_t n_bins = 10) : n_bins_(n_bins) {}
  explicit ScalingBinningCalibrator(ScalingBinningParams params)
      : n_bins_(params.bins.outputs.size()), params_(std::move(params)) {}
  std::string_view kind() const override { return "scaling-binning"; }
  void fit(const Dataset& dataset) override { params_ = scaling_binning_fit(dataset, n_bins_); }
  double apply(double prediction, std::span<const FeatureValue>) const override {
    return scaling_binning_apply(params_, prediction);
  }
  nlohmann::json to_json() const override;
  const ScalingBinningParams& params() const { return params_; }

 private:
  std::size_t n_bins_;
  ScalingBinningParams params_;
};

/// Rebuilds any calibrator from its to_json() form (MBCT included).
std::unique_ptr<Calibrator> calibrator_from_json(const nlohmann::json& j);

}  // namespace mbct
