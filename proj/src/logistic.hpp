#pragma once

#include <span>
#include <vector>

namespace mbct::detail {

struct LogisticFit {
  std::vector<double> coefficients;  // one per covariate column, intercept last
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Weighted Bernoulli maximum likelihood for sigmoid(X beta + intercept) by
/// damped Newton. `columns` are covariates (each of length n); labels may be
/// fractional. Stops when the per-unit-weight gradient norm drops below
/// `tolerance` or after `max_iterations`.
LogisticFit fit_logistic(std::span<const std::vector<double>> columns, std::span<const double> labels,
                         std::span<const double> weights, double tolerance = 1e-8, int max_iterations = 200);

double sigmoid(double z);
double logit(double p);

}  // namespace mbct::detail
