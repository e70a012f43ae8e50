#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mbct/core.hpp"
#include "mbct/kernels.hpp"

namespace mbct {

struct MetricConfig {
  double p = 2.0;
  std::size_t r = 100;          // MVCE divisions
  std::size_t bin_size = 1000;  // MVCE rows per bin
  std::size_t n_bins = 32;      // ECE bins
  std::uint64_t seed = 0;
  kernels::Exec exec = kernels::Exec::Parallel;

  void validate() const;
};

/// Non-owning columns a metric needs. `weights` may be empty (unit weights).
struct CalibrationView {
  std::span<const double> calibrated;
  std::span<const double> labels;
  std::span<const double> weights;

  std::size_t size() const { return labels.size(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

/// Owns the label/weight columns of a dataset so a view can point at them.
class DatasetColumns {
 public:
  DatasetColumns(const Dataset& dataset, std::span<const double> calibrated);
  CalibrationView view() const { return {calibrated_, labels_, weights_}; }

 private:
  std::span<const double> calibrated_;
  std::vector<double> labels_;
  std::vector<double> weights_;
};

struct MetricReport {
  double mvce = 0.0;
  double ece = 0.0;
  double ece_sweep = 0.0;
  std::size_t ece_sweep_bins = 0;
  double auc = 0.0;
  std::optional<double> tce;
  std::vector<double> per_division_pce;
};

// --- partition calibration error -------------------------------------------

double pce(const CalibrationView& view, std::span<const std::size_t> indices);
double pce(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated);

/// calibrated-mean / label-mean over the bin. Above 1 means overestimated.
double pud(const CalibrationView& view, std::span<const std::size_t> indices);
double pud(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated);

/// Mean PCE over k shuffled, equally sized subsets of the bin.
double bfgpce(const CalibrationView& view, std::span<const std::size_t> indices, std::size_t k, Rng& rng);
double bfgpce(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const double> calibrated,
              std::size_t k, Rng& rng);

// --- multi-view calibration error ------------------------------------------

struct MvceResult {
  double value = 0.0;
  std::vector<double> per_division;  // mean PCE of each division
};

/// r shuffled uniform-mass divisions with config.bin_size rows per bin,
/// seeds drawn from `rng`.
MvceResult mvce_detail(const CalibrationView& view, const MetricConfig& config, Rng& rng);
double mvce(const CalibrationView& view, const MetricConfig& config, Rng& rng);
double mvce(const Dataset& dataset, std::span<const double> calibrated, const MetricConfig& config, Rng& rng);
/// Seeds a fresh Rng from config.seed.
double mvce(const Dataset& dataset, std::span<const double> calibrated, const MetricConfig& config);

/// The MVCE formula over caller-supplied divisions.
double mvce_over(const CalibrationView& view, std::span<const DivisionScheme> divisions, double p);

// --- expected calibration error --------------------------------------------

double ece_n(const CalibrationView& view, std::size_t n_bins, double p);
double ece_n(const Dataset& dataset, std::span<const double> calibrated, std::size_t n_bins, double p);

struct SweepResult {
  double value = 0.0;
  std::size_t n_bins = 1;
};

/// Largest uniform-mass bin count whose bin label means are non-decreasing;
/// falls back to a single bin when two bins already break monotonicity.
SweepResult ece_sweep(const CalibrationView& view, double p);
SweepResult ece_sweep(const Dataset& dataset, std::span<const double> calibrated, double p);

// --- ground truth and order metrics ----------------------------------------

double tce(std::span<const double> true_probs, std::span<const double> calibrated, double p,
           std::span<const double> weights = {});
double tce(const Dataset& dataset, std::span<const double> calibrated, double p);

/// Mann-Whitney AUC with average ranks for ties. Labels must be 0 or 1.
double auc(std::span<const double> labels, std::span<const double> scores);

enum class Monotonicity { StrictlyMonotonic, NonStrictlyMonotonic, NonMonotonic };
const char* to_string(Monotonicity m);

Monotonicity classify_monotonicity(std::span<const double> predictions, std::span<const double> calibrated);

MetricReport evaluate_metrics(const Dataset& dataset, std::span<const double> calibrated, const MetricConfig& config);

}  // namespace mbct
