#include "logistic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mbct/error.hpp"

namespace mbct::detail {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LogisticFit fit_logistic(std::span<const std::vector<double>> columns, std::span<const double> labels,
                         std::span<const double> weights, double tolerance, int max_iterations) {
  const std::size_t n = labels.size();
  const auto d = static_cast<Eigen::Index>(columns.size() + 1);
  if (n == 0) throw Error("logistic fit: empty data");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != n) throw Error("logistic fit: column length mismatch");
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = columns[c][i];
  }
  x.col(d - 1).setOnes();
  const Eigen::Map<const Eigen::VectorXd> y(labels.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(n));
  const double total_w = w.sum();

  auto neg_log_lik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd z = x * beta;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) nll += w(i) * (softplus(z(i)) - y(i) * z(i));
    return nll / total_w;
  };

  // Start from the intercept-only optimum.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  const double base = std::clamp(y.dot(w) / total_w, 1e-12, 1.0 - 1e-12);
  beta(d - 1) = logit(base);

  LogisticFit fit;
  double loss = neg_log_lik(beta);
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd z = x * beta;
    Eigen::VectorXd resid(z.size()), curv(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = sigmoid(z(i));
      resid(i) = w(i) * (s - y(i));
      curv(i) = w(i) * s * (1.0 - s);
    }
    const Eigen::VectorXd grad = x.transpose() * resid / total_w;
    fit.gradient_norm = grad.norm();
    fit.iterations = it;
    if (fit.gradient_norm < tolerance) break;
    Eigen::MatrixXd hess = x.transpose() * curv.asDiagonal() * x / total_w;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = beta - step;
    double next_loss = neg_log_lik(next);
    while (next_loss > loss && scale > 1e-10) {
      scale *= 0.5;
      next = beta - scale * step;
      next_loss = neg_log_lik(next);
    }
    if (next_loss > loss) break;  // no descent direction left at machine precision
    beta = next;
    loss = next_loss;
    fit.iterations = it + 1;
  }
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  return fit;
}

}  // namespace mbct::detail
