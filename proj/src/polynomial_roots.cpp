#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "obfloc/solvers.hpp"

namespace obfloc::detail {

namespace {

double horner(std::span<const double> c, double x, double* derivative) {
  double p = 0.0;
  double dp = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) {
    dp = dp * x + p;
    p = p * x + c[i];
  }
  if (derivative) *derivative = dp;
  return p;
}

}  // namespace

std::vector<double> real_polynomial_roots(std::span<const double> coeffs, int newton_steps) {
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};

  std::size_t degree = coeffs.size();
  while (degree > 0 && std::abs(coeffs[degree - 1]) <= 1e-14 * scale) --degree;
  if (degree <= 1) return {};
  const std::size_t n = degree - 1;
  const auto c = coeffs.first(degree);

  std::vector<double> roots;
  if (n == 1) {
    roots.push_back(-c[0] / c[1]);
  } else {
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (std::size_t i = 0; i < n; ++i) companion(i, n - 1) = -c[i] / c[n];
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    if (es.info() != Eigen::Success) return {};
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const auto ev = es.eigenvalues()(i);
      if (std::abs(ev.imag()) <= 1e-6 * (1.0 + std::abs(ev.real()))) roots.push_back(ev.real());
    }
  }
  for (double& r : roots) {
    for (int k = 0; k < newton_steps; ++k) {
      double dp = 0.0;
      const double p = horner(c, r, &dp);
      if (dp == 0.0) break;
      const double step = p / dp;
      if (!std::isfinite(step)) break;
      r -= step;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace obfloc::detail
