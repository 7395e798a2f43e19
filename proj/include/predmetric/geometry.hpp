#pragma once

// Riemannian machinery over a d-dimensional parameter domain: charts, metric
// and scalar fields, connection coefficients, Laplace-Beltrami operators and
// the finite-difference kernels they fall back on.
//
// Smoothness: metrics and scalar fields are assumed C^2 on the admitted
// domain. Nothing here checks that beyond finiteness of evaluated values.

#include "predmetric/errors.hpp"
#include "predmetric/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace predmetric {

enum class FdOrder { Second, Fourth };

struct FdOptions {
  // Order of the central stencil used for first derivatives.
  FdOrder gradient_order = FdOrder::Fourth;
  // Points closer than boundary_factor * h to a positivity boundary are rejected.
  double boundary_factor = 4.0;
};

// Coordinate system on the parameter domain. Every chart knows how to map to
// and from a designated reference chart; the reference chart maps to itself.
class Chart {
 public:
  using Map = std::function<Point(const Point&)>;
  using JacobianMap = std::function<Matrix(const Point&)>;

  struct Spec {
    std::string name;
    int dim = 0;
    // positive[i]: coordinate i must be > 0.
    std::vector<bool> positive;
    // Lower bound on the finite-difference step scale per coordinate; the
    // step is c * max(|x_i|, scale_i). Empty means 1 for unconstrained and 0
    // (pure relative step) for positive coordinates.
    std::vector<double> step_scale;
    Map to_reference;
    Map from_reference;
    // d(reference)/d(this) evaluated at a point of this chart.
    JacobianMap jacobian_to_reference;
    // d(this)/d(reference) evaluated at a reference point.
    JacobianMap jacobian_from_reference;
  };

  explicit Chart(Spec spec);

  // Reference-chart identity map on R^d with optional positivity constraints.
  static Chart reference(std::string name, int dim, std::vector<bool> positive = {});

  const std::string& name() const noexcept { return impl_->name; }
  int dim() const noexcept { return impl_->dim; }
  bool positive(int i) const { return impl_->positive[static_cast<std::size_t>(i)]; }
  double step_scale(int i) const { return impl_->step_scale[static_cast<std::size_t>(i)]; }

  bool admits(const Point& p) const;
  // Throws ErrorKind::Domain when p is not admitted.
  void require(const Point& p) const;

  Point to_reference(const Point& p) const { return impl_->to_reference(p); }
  Point from_reference(const Point& r) const { return impl_->from_reference(r); }
  Matrix jacobian_to_reference(const Point& p) const;
  Matrix jacobian_from_reference(const Point& r) const;

 private:
  std::shared_ptr<const Spec> impl_;
};

// Coordinates of the same manifold point expressed in another chart.
Point transfer(const Point& p, const Chart& from, const Chart& to);

// ---------------------------------------------------------------------------
// Finite differences.

namespace detail {

inline double gradient_step_factor(FdOrder order) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return order == FdOrder::Second ? std::cbrt(eps) : std::pow(eps, 0.2);
}

// Step for coordinate k after stencil/boundary validation. The returned step
// is exactly representable as (x + h) - x.
double checked_step(const Point& theta, int k, double factor, int reach, const Chart& chart,
                    const FdOptions& opts);

}  // namespace detail

// Partial derivative d/dtheta_k of f at theta for any f returning a value
// type that supports +, - and scalar multiplication (double, Vector, Matrix).
template <class F>
auto fd_partial(const F& f, const Point& theta, int k, const Chart& chart, const FdOptions& opts = {})
    -> std::decay_t<decltype(f(theta))> {
  using Value = std::decay_t<decltype(f(theta))>;
  const double factor = detail::gradient_step_factor(opts.gradient_order);
  const int reach = opts.gradient_order == FdOrder::Second ? 1 : 2;
  const double h = detail::checked_step(theta, k, factor, reach, chart, opts);
  auto shifted = [&](double delta) {
    Point p = theta;
    p[k] += delta;
    return f(p);
  };
  if (opts.gradient_order == FdOrder::Second) {
    Value out = (shifted(h) - shifted(-h)) * (0.5 / h);
    return out;
  }
  Value out = (shifted(-2.0 * h) - 8.0 * shifted(-h) + 8.0 * shifted(h) - shifted(2.0 * h)) * (1.0 / (12.0 * h));
  return out;
}

Vector fd_gradient(const std::function<double(const Point&)>& f, const Point& theta, const Chart& chart,
                   const FdOptions& opts = {});

// Central second differences with h_i = eps^(1/4) max(|theta_i|, scale_i); symmetrized.
Matrix fd_hessian(const std::function<double(const Point&)>& f, const Point& theta, const Chart& chart,
                  const FdOptions& opts = {});

// J(i, k) = d v^i / d theta^k.
Matrix fd_jacobian(const std::function<Vector(const Point&)>& v, const Point& theta, const Chart& chart,
                   const FdOptions& opts = {});

// ---------------------------------------------------------------------------
// Fields.

// Value, gradient and Hessian of a scalar field at a point.
struct Jet {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

class ScalarField {
 public:
  using Value = std::function<double(const Point&)>;
  using Gradient = std::function<Vector(const Point&)>;
  using Hessian = std::function<Matrix(const Point&)>;

  ScalarField(Chart chart, Value value, Gradient gradient = {}, Hessian hessian = {});

  static ScalarField constant(Chart chart, double c);

  double operator()(const Point& p) const { return value_(p); }
  const Chart& chart() const noexcept { return chart_; }
  bool has_gradient() const noexcept { return static_cast<bool>(gradient_); }
  bool has_hessian() const noexcept { return static_cast<bool>(hessian_); }

  // Analytic when provided, finite differences otherwise.
  Vector gradient(const Point& p, const FdOptions& opts = {}) const;
  Matrix hessian(const Point& p, const FdOptions& opts = {}) const;
  Jet jet(const Point& p, const FdOptions& opts = {}) const;

  // Fields derived by the chain rule; analytic derivatives carry over.
  ScalarField power(double c) const;
  ScalarField sqrt() const { return power(0.5); }

 private:
  Chart chart_;
  Value value_;
  Gradient gradient_;
  Hessian hessian_;
};

class MetricField {
 public:
  enum class Provenance { Analytic, DerivedByFormula, Numeric };
  using Eval = std::function<Matrix(const Point&)>;

  MetricField(Chart chart, Eval eval, Provenance provenance);

  Matrix operator()(const Point& p) const { return eval_(p); }
  const Chart& chart() const noexcept { return chart_; }
  Provenance provenance() const noexcept { return provenance_; }
  int dim() const noexcept { return chart_.dim(); }

 private:
  Chart chart_;
  Eval eval_;
  Provenance provenance_;
};

// ---------------------------------------------------------------------------
// Operations.

struct SpdOptions {
  double symmetry_tol = 1e-12;    // relative to max |g_ij|
  double eigenvalue_tol = 1e-12;  // relative to trace
};

struct MetricAt {
  Matrix metric;
  Matrix inverse;
  double det = 0.0;
};

// Validates symmetry and positive-definiteness (ErrorKind::NonSPD).
MetricAt check_spd(const Matrix& g, const SpdOptions& opts = {});

MetricAt metric_inverse_and_det(const MetricField& m, const Point& theta, const SpdOptions& opts = {});

// dg[k] = d g / d theta^k.
std::vector<Matrix> metric_derivatives(const MetricField& m, const Point& theta, const FdOptions& opts = {});

// Gamma0_ijk = (d_i g_jk + d_j g_ki - d_k g_ij) / 2 from metric derivatives.
Tensor3 connection_from_derivatives(const std::vector<Matrix>& dg);

Tensor3 riemannian_connection(const MetricField& m, const Point& theta, const FdOptions& opts = {});

// t_k = sum_i Gamma_{ki}^i for a connection with its last index raised.
Vector connection_trace(const Tensor3& raised);

// d_k log |g|^(1/2) by differentiating log det directly.
Vector log_volume_gradient(const MetricField& m, const Point& theta, const FdOptions& opts = {});

// Laplacian in the positive-divergence sign convention:
//   Delta f = sum g^ij (d_i d_j f - sum_k Gamma_ij^k d_k f).
double laplace_beltrami(const Matrix& inverse_metric, const Tensor3& gamma_lower, const Jet& f);
double laplace_beltrami(const MetricField& m, const ScalarField& f, const Point& theta, const FdOptions& opts = {});

// g'_{ab}(xi) = sum (d theta^i / d xi^a) g_ij (d theta^j / d xi^b), with the
// result living on chart_to. `m` must live on chart_from.
MetricField pushforward_metric(const MetricField& m, const Chart& chart_from, const Chart& chart_to);

// The same scalar function expressed in chart_to coordinates (FD derivatives).
ScalarField pullback_scalar(const ScalarField& f, const Chart& chart_to);

// c * g on the same chart.
MetricField scale_metric(const MetricField& m, double c);

}  // namespace predmetric
