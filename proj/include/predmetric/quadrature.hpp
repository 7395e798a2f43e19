#pragma once

#include "predmetric/errors.hpp"

#include <functional>
#include <vector>

namespace predmetric::quadrature {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const noexcept { return nodes.size(); }

  template <class F>
  double apply(const F& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

// n-point rule for E[h(Z)], Z ~ N(0, 1): sum w_i = 1.
Rule gauss_hermite(int n);

// n-point Gauss-Legendre rule on [a, b].
Rule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Trapezoidal rule after z = sinh(pi/2 sinh t) on |t| <= t_max with step
// 2^-level; integrates smooth functions over the real line.
Rule double_exponential_real_line(int level, double t_max = 3.5);

struct AdaptiveOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-12;
  unsigned max_depth = 30;
};

struct AdaptiveResult {
  double value = 0.0;
  double error = 0.0;
};

// Adaptive G7K15 on [a, b]; throws ErrorKind::Integration when the error
// estimate misses max(abs_tol, rel_tol * |value|).
AdaptiveResult gauss_kronrod(const std::function<double(double)>& f, double a, double b,
                             const AdaptiveOptions& opts = {});

}  // namespace predmetric::quadrature
