#include <cmath>
#include <limits>
#include <numeric>

#include "mbct/core.hpp"
#include "mbct/kernels.hpp"

namespace mbct::kernels {
namespace {

std::size_t checked_bins(std::size_t rows, std::size_t bin_size) {
  if (bin_size == 0 || bin_size >= rows || rows / bin_size < 2) throw Error("degenerate division");
  if (rows > std::numeric_limits<std::uint32_t>::max()) throw Error("division: too many rows");
  return rows / bin_size;
}

// Shuffles positions with `seed` exactly as make_division() does and writes
// the bin of every position.
void fill_assignment(std::size_t rows, std::size_t bins, std::uint64_t seed, std::span<std::uint32_t> out,
                     std::vector<std::uint32_t>& scratch) {
  scratch.resize(rows);
  std::iota(scratch.begin(), scratch.end(), 0u);
  Rng rng(seed);
  rng.shuffle(std::span<std::uint32_t>(scratch));
  const auto sizes = uniform_mass_sizes(rows, bins);
  std::size_t pos = 0;
  for (std::uint32_t b = 0; b < bins; ++b) {
    for (std::size_t k = 0; k < sizes[b]; ++k) out[scratch[pos++]] = b;
  }
}

double mean_pce(std::span<const std::uint32_t> assignment, std::size_t bins, const Residuals& residuals,
                std::vector<double>& sum_r, std::vector<double>& sum_w) {
  sum_r.assign(bins, 0.0);
  sum_w.assign(bins, 0.0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    sum_r[assignment[i]] += residuals.weighted[i];
    sum_w[assignment[i]] += residuals.weight[i];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) total += std::abs(sum_r[b] / sum_w[b]);
  return total / static_cast<double>(bins);
}

}  // namespace

ShuffledDivisions::ShuffledDivisions(std::size_t rows, std::size_t bin_size, std::span<const std::uint64_t> seeds,
                                     Exec exec)
    : rows_(rows), divisions_(seeds.size()), bins_(checked_bins(rows, bin_size)), assignment_(rows * seeds.size()) {
  const auto count = static_cast<std::ptrdiff_t>(divisions_);
#pragma omp parallel if (exec == Exec::Parallel)
  {
    std::vector<std::uint32_t> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < count; ++d) {
      const auto du = static_cast<std::size_t>(d);
      fill_assignment(rows_, bins_, seeds[du], {assignment_.data() + du * rows_, rows_}, scratch);
    }
  }
}

std::vector<double> division_mean_pce(const ShuffledDivisions& divisions, const Residuals& residuals, Exec exec) {
  if (residuals.size() != divisions.rows()) throw Error("division_mean_pce: row count mismatch");
  std::vector<double> out(divisions.divisions());
  const auto count = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel if (exec == Exec::Parallel)
  {
    std::vector<double> sum_r, sum_w;
#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < count; ++d) {
      const auto du = static_cast<std::size_t>(d);
      out[du] = mean_pce(divisions.assignment(du), divisions.bins(), residuals, sum_r, sum_w);
    }
  }
  return out;
}

std::vector<double> shuffled_division_mean_pce(const Residuals& residuals, std::size_t bin_size,
                                               std::span<const std::uint64_t> seeds, Exec exec) {
  const std::size_t rows = residuals.size();
  const std::size_t bins = checked_bins(rows, bin_size);
  const auto sizes = uniform_mass_sizes(rows, bins);
  std::vector<double> out(seeds.size());
  const auto count = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel if (exec == Exec::Parallel)
  {
    // Shuffling the residual pairs themselves applies the same permutation
    // as shuffling row indices, without the gather afterwards.
    struct Pair {
      double weighted, weight;
    };
    std::vector<Pair> pairs(rows);
#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < count; ++d) {
      const auto du = static_cast<std::size_t>(d);
      for (std::size_t i = 0; i < rows; ++i) pairs[i] = {residuals.weighted[i], residuals.weight[i]};
      Rng rng(seeds[du]);
      rng.shuffle(std::span<Pair>(pairs));
      double total = 0.0;
      std::size_t pos = 0;
      for (auto size : sizes) {
        double r = 0.0, w = 0.0;
        for (std::size_t k = 0; k < size; ++k, ++pos) {
          r += pairs[pos].weighted;
          w += pairs[pos].weight;
        }
        total += std::abs(r / w);
      }
      out[du] = total / static_cast<double>(bins);
    }
  }
  return out;
}

}  // namespace mbct::kernels
