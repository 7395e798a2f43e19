#include "predmetric/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace predmetric::quadrature {

namespace {

// Symmetric rule for the Jacobi recurrence with zero diagonal and
// off-diagonal sqrt(beta(k)), total mass mu0. Positive roots are found
// largest-first by Newton on the orthonormal recurrence; `guess(i, roots)`
// seeds root i from the ones already found. Weights use the Christoffel
// function 1 / sum_k p_k(x)^2.
template <class Beta, class Guess>
Rule symmetric_rule(int n, double mu0, const Beta& beta, const Guess& guess) {
  if (n < 1) fail(ErrorKind::Range, "quadrature rule needs at least one node");
  Rule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));

  auto evaluate = [&](double x, double& pn, double& dpn, double& sumsq) {
    double p_prev = 0.0, p = 1.0 / std::sqrt(mu0);
    double dp_prev = 0.0, dp = 0.0;
    sumsq = p * p;
    for (int k = 0; k < n; ++k) {
      const double sb_next = std::sqrt(beta(k + 1));
      const double sb = k > 0 ? std::sqrt(beta(k)) : 0.0;
      const double p_next = (x * p - sb * p_prev) / sb_next;
      const double dp_next = (p + x * dp - sb * dp_prev) / sb_next;
      p_prev = p;
      p = p_next;
      dp_prev = dp;
      dp = dp_next;
      if (k + 1 < n) sumsq += p * p;
    }
    pn = p;
    dpn = dp;
  };

  std::vector<double> roots;
  const int half = n / 2;
  for (int i = 0; i < half; ++i) {
    double x = guess(i, roots);
    double pn = 0.0, dpn = 1.0, sumsq = 1.0;
    for (int it = 0; it < 200; ++it) {
      evaluate(x, pn, dpn, sumsq);
      const double dx = pn / dpn;
      x -= dx;
      if (std::abs(dx) <= 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    evaluate(x, pn, dpn, sumsq);
    roots.push_back(x);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = 1.0 / sumsq;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = 1.0 / sumsq;
  }
  if (n % 2 == 1) {
    double pn = 0.0, dpn = 0.0, sumsq = 1.0;
    evaluate(0.0, pn, dpn, sumsq);
    rule.nodes[static_cast<std::size_t>(half)] = 0.0;
    rule.weights[static_cast<std::size_t>(half)] = 1.0 / sumsq;
  }
  return rule;
}

}  // namespace

Rule gauss_hermite(int n) {
  // Physicists' weight e^{-x^2}; initial root approximations as in the
  // classic gauher routine.
  auto beta = [](int k) { return 0.5 * k; };
  auto guess = [n](int i, const std::vector<double>& r) {
    const double nn = n;
    if (i == 0) return std::sqrt(2.0 * nn + 1.0) - 1.85575 * std::pow(2.0 * nn + 1.0, -0.16667);
    if (i == 1) return r[0] - 1.14 * std::pow(nn, 0.426) / r[0];
    if (i == 2) return 1.86 * r[1] - 0.86 * r[0];
    if (i == 3) return 1.91 * r[2] - 0.91 * r[1];
    const auto k = static_cast<std::size_t>(i);
    return 2.0 * r[k - 1] - r[k - 2];
  };
  const double mu0 = std::sqrt(std::numbers::pi);
  Rule rule = symmetric_rule(n, mu0, beta, guess);
  // Rescale to the standard normal measure.
  for (std::size_t i = 0; i < rule.size(); ++i) {
    rule.nodes[i] *= std::numbers::sqrt2;
    rule.weights[i] /= mu0;
  }
  return rule;
}

Rule gauss_legendre(int n, double a, double b) {
  auto beta = [](int k) {
    const double kk = k;
    return kk * kk / (4.0 * kk * kk - 1.0);
  };
  auto guess = [n](int i, const std::vector<double>&) {
    return std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
  };
  Rule rule = symmetric_rule(n, 2.0, beta, guess);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

Rule double_exponential_real_line(int level, double t_max) {
  const double h = std::ldexp(1.0, -level);
  const int m = static_cast<int>(std::ceil(t_max / h));
  Rule rule;
  rule.nodes.reserve(static_cast<std::size_t>(2 * m + 1));
  rule.weights.reserve(static_cast<std::size_t>(2 * m + 1));
  for (int k = -m; k <= m; ++k) {
    const double t = k * h;
    const double inner = 0.5 * std::numbers::pi * std::sinh(t);
    rule.nodes.push_back(std::sinh(inner));
    rule.weights.push_back(h * 0.5 * std::numbers::pi * std::cosh(t) * std::cosh(inner));
  }
  return rule;
}

AdaptiveResult gauss_kronrod(const std::function<double(double)>& f, double a, double b, const AdaptiveOptions& opts) {
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, opts.max_depth,
                                                                                      opts.rel_tol, &error, &l1);
  if (!std::isfinite(value)) fail(ErrorKind::Integration, "adaptive quadrature produced a non-finite value");
  const double target = std::max(opts.abs_tol, opts.rel_tol * std::abs(value));
  if (error > target)
    fail(ErrorKind::Integration, "adaptive quadrature missed its target (error estimate " + std::to_string(error) +
                                     ", target " + std::to_string(target) + ")");
  return {value, error};
}

}  // namespace predmetric::quadrature
