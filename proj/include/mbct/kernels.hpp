#pragma once

// Hot loops behind MVCE. Two implementations are kept side by side:
//   * mbct::kernels::*         OpenMP-parallel, fused shuffle + scatter-add.
//   * mbct::kernels::serial::* plain reference built on make_division();
//                              used by tests and the benchmark as the oracle.
// Both consume the per-division seeds identically, so they see the same
// partitions and agree up to summation order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mbct::kernels {

enum class Exec { Serial, Parallel };

/// Per-row PCE terms: weight * (calibrated - label), and weight.
struct Residuals {
  std::vector<double> weighted;
  std::vector<double> weight;

  std::size_t size() const { return weight.size(); }
};

Residuals make_residuals(std::span<const double> calibrated, std::span<const double> labels,
                         std::span<const double> weights);

/// Bin assignment of `rows` positions under several independent shuffled
/// uniform-mass divisions, one per seed. Reused across every candidate
/// calibration evaluated on the same sample set.
class ShuffledDivisions {
 public:
  ShuffledDivisions(std::size_t rows, std::size_t bin_size, std::span<const std::uint64_t> seeds,
                    Exec exec = Exec::Parallel);

  std::size_t rows() const { return rows_; }
  std::size_t divisions() const { return divisions_; }
  std::size_t bins() const { return bins_; }
  std::span<const std::uint32_t> assignment(std::size_t division) const {
    return {assignment_.data() + division * rows_, rows_};
  }

 private:
  std::size_t rows_;
  std::size_t divisions_;
  std::size_t bins_;
  std::vector<std::uint32_t> assignment_;
};

/// Mean PCE over the bins of each division.
std::vector<double> division_mean_pce(const ShuffledDivisions& divisions, const Residuals& residuals,
                                      Exec exec = Exec::Parallel);

/// Same as above without materialising the assignment table.
std::vector<double> shuffled_division_mean_pce(const Residuals& residuals, std::size_t bin_size,
                                               std::span<const std::uint64_t> seeds,
                                               Exec exec = Exec::Parallel);

/// (mean_i v_i^p)^(1/p), summed in index order.
double power_mean(std::span<const double> values, double p);

namespace serial {

std::vector<double> shuffled_division_mean_pce(const Residuals& residuals, std::size_t bin_size,
                                               std::span<const std::uint64_t> seeds);

}  // namespace serial
}  // namespace mbct::kernels
