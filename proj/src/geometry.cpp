#include "predmetric/geometry.hpp"

#include <algorithm>
#include <sstream>

namespace predmetric {

Tensor3 raise_last(const Tensor3& lower, const Matrix& inverse_metric) {
  const int d = lower.dim();
  Tensor3 out(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int l = 0; l < d; ++l) acc += lower(i, j, l) * inverse_metric(k, l);
        out(i, j, k) = acc;
      }
  return out;
}

namespace {

std::string format_point(const Point& p) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Chart

Chart::Chart(Spec spec) {
  if (spec.dim <= 0) fail(ErrorKind::Spec, "chart '" + spec.name + "' needs a positive dimension");
  const auto d = static_cast<std::size_t>(spec.dim);
  if (spec.positive.empty()) spec.positive.assign(d, false);
  if (spec.positive.size() != d) fail(ErrorKind::Spec, "chart positivity mask has wrong length");
  if (spec.step_scale.empty()) {
    spec.step_scale.resize(d);
    for (std::size_t i = 0; i < d; ++i) spec.step_scale[i] = spec.positive[i] ? 0.0 : 1.0;
  }
  if (spec.step_scale.size() != d) fail(ErrorKind::Spec, "chart step scales have wrong length");
  if (!spec.to_reference || !spec.from_reference) fail(ErrorKind::Spec, "chart maps missing");
  impl_ = std::make_shared<const Spec>(std::move(spec));
}

Chart Chart::reference(std::string name, int dim, std::vector<bool> positive) {
  Spec spec;
  spec.name = std::move(name);
  spec.dim = dim;
  spec.positive = std::move(positive);
  spec.to_reference = [](const Point& p) { return p; };
  spec.from_reference = [](const Point& r) { return r; };
  spec.jacobian_to_reference = [dim](const Point&) { return Matrix::Identity(dim, dim); };
  spec.jacobian_from_reference = [dim](const Point&) { return Matrix::Identity(dim, dim); };
  return Chart(std::move(spec));
}

bool Chart::admits(const Point& p) const {
  if (p.size() != dim()) return false;
  for (int i = 0; i < dim(); ++i) {
    if (!std::isfinite(p[i])) return false;
    if (positive(i) && !(p[i] > 0.0)) return false;
  }
  return true;
}

void Chart::require(const Point& p) const {
  if (p.size() != dim())
    fail(ErrorKind::Domain, "point of dimension " + std::to_string(p.size()) + " given to chart '" + name() +
                                "' of dimension " + std::to_string(dim()));
  if (!admits(p)) fail(ErrorKind::Domain, "point " + format_point(p) + " outside chart '" + name() + "'");
}

Matrix Chart::jacobian_to_reference(const Point& p) const {
  if (impl_->jacobian_to_reference) return impl_->jacobian_to_reference(p);
  const Chart self = *this;
  return fd_jacobian([self](const Point& q) { return self.to_reference(q); }, p, *this);
}

Matrix Chart::jacobian_from_reference(const Point& r) const {
  if (impl_->jacobian_from_reference) return impl_->jacobian_from_reference(r);
  const Point p = from_reference(r);
  // Invert the forward Jacobian; the from-map's own domain is the reference chart's.
  return jacobian_to_reference(p).inverse();
}

Point transfer(const Point& p, const Chart& from, const Chart& to) {
  if (from.dim() != to.dim()) fail(ErrorKind::ChartMismatch, "charts '" + from.name() + "' and '" + to.name() + "' differ in dimension");
  return to.from_reference(from.to_reference(p));
}

// ---------------------------------------------------------------------------
// Finite differences

namespace detail {

double checked_step(const Point& theta, int k, double factor, int reach, const Chart& chart, const FdOptions& opts) {
  chart.require(theta);
  const double x = theta[k];
  double h = factor * std::max(std::abs(x), chart.step_scale(k));
  volatile double shifted = x + h;
  h = shifted - x;
  if (!(h > 0.0) || !std::isfinite(h))
    fail(ErrorKind::Step, "finite-difference step underflow at coordinate " + std::to_string(k) + " of " +
                              format_point(theta));
  if (chart.positive(k) && x <= std::max(opts.boundary_factor, static_cast<double>(reach)) * h)
    fail(ErrorKind::Domain, "point " + format_point(theta) + " too close to the boundary of chart '" + chart.name() +
                                "' for a finite-difference stencil");
  return h;
}

}  // namespace detail

Vector fd_gradient(const std::function<double(const Point&)>& f, const Point& theta, const Chart& chart,
                   const FdOptions& opts) {
  Vector g(theta.size());
  for (int k = 0; k < theta.size(); ++k) g[k] = fd_partial(f, theta, k, chart, opts);
  return g;
}

Matrix fd_hessian(const std::function<double(const Point&)>& f, const Point& theta, const Chart& chart,
                  const FdOptions& opts) {
  const int d = static_cast<int>(theta.size());
  const double factor = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  std::vector<double> h(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) h[static_cast<std::size_t>(i)] = detail::checked_step(theta, i, factor, 1, chart, opts);

  auto at = [&](int i, double di, int j, double dj) {
    Point p = theta;
    p[i] += di;
    p[j] += dj;
    return f(p);
  };
  const double f0 = f(theta);
  Matrix H(d, d);
  for (int i = 0; i < d; ++i) {
    const double hi = h[static_cast<std::size_t>(i)];
    H(i, i) = (at(i, hi, i, 0.0) - 2.0 * f0 + at(i, -hi, i, 0.0)) / (hi * hi);
    for (int j = i + 1; j < d; ++j) {
      const double hj = h[static_cast<std::size_t>(j)];
      const double v =
          (at(i, hi, j, hj) - at(i, hi, j, -hj) - at(i, -hi, j, hj) + at(i, -hi, j, -hj)) / (4.0 * hi * hj);
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

Matrix fd_jacobian(const std::function<Vector(const Point&)>& v, const Point& theta, const Chart& chart,
                   const FdOptions& opts) {
  const int d = static_cast<int>(theta.size());
  Matrix J;
  for (int k = 0; k < d; ++k) {
    Vector col = fd_partial(v, theta, k, chart, opts);
    if (k == 0) J.resize(col.size(), d);
    J.col(k) = col;
  }
  return J;
}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(Chart chart, Value value, Gradient gradient, Hessian hessian)
    : chart_(std::move(chart)), value_(std::move(value)), gradient_(std::move(gradient)), hessian_(std::move(hessian)) {
  if (!value_) fail(ErrorKind::Spec, "scalar field without a value function");
}

ScalarField ScalarField::constant(Chart chart, double c) {
  const int d = chart.dim();
  return ScalarField(
      std::move(chart), [c](const Point&) { return c; }, [d](const Point&) { return Vector(Vector::Zero(d)); },
      [d](const Point&) { return Matrix(Matrix::Zero(d, d)); });
}

Vector ScalarField::gradient(const Point& p, const FdOptions& opts) const {
  if (gradient_) return gradient_(p);
  return fd_gradient(value_, p, chart_, opts);
}

Matrix ScalarField::hessian(const Point& p, const FdOptions& opts) const {
  if (hessian_) return hessian_(p);
  if (gradient_) {
    Matrix H = fd_jacobian(gradient_, p, chart_, opts);
    return 0.5 * (H + H.transpose());
  }
  return fd_hessian(value_, p, chart_, opts);
}

Jet ScalarField::jet(const Point& p, const FdOptions& opts) const {
  return Jet{value_(p), gradient(p, opts), hessian(p, opts)};
}

ScalarField ScalarField::power(double c) const {
  const ScalarField base = *this;
  Value value = [base, c](const Point& p) { return std::pow(base(p), c); };
  if (!has_gradient()) return ScalarField(chart_, std::move(value));
  Gradient gradient = [base, c](const Point& p) {
    const double f = base(p);
    return Vector(c * std::pow(f, c - 1.0) * base.gradient(p));
  };
  Hessian hessian;
  if (has_hessian()) {
    hessian = [base, c](const Point& p) {
      const double f = base(p);
      const Vector g = base.gradient(p);
      return Matrix(c * std::pow(f, c - 1.0) * base.hessian(p) +
                    c * (c - 1.0) * std::pow(f, c - 2.0) * (g * g.transpose()));
    };
  }
  return ScalarField(chart_, std::move(value), std::move(gradient), std::move(hessian));
}

// ---------------------------------------------------------------------------
// MetricField and operations

MetricField::MetricField(Chart chart, Eval eval, Provenance provenance)
    : chart_(std::move(chart)), eval_(std::move(eval)), provenance_(provenance) {
  if (!eval_) fail(ErrorKind::Spec, "metric field without an evaluator");
}

MetricAt check_spd(const Matrix& g, const SpdOptions& opts) {
  if (g.rows() != g.cols() || g.rows() == 0) fail(ErrorKind::NonSPD, "metric is not a non-empty square matrix");
  if (!g.allFinite()) fail(ErrorKind::NonSPD, "metric has non-finite entries");
  const double scale = g.cwiseAbs().maxCoeff();
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  if (asym > opts.symmetry_tol * scale)
    fail(ErrorKind::NonSPD, "metric not symmetric (max asymmetry " + std::to_string(asym) + ")");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  const double trace = g.trace();
  if (!(min_eig > opts.eigenvalue_tol * trace))
    fail(ErrorKind::NonSPD, "metric not positive definite (min eigenvalue " + std::to_string(min_eig) + ")");
  Eigen::LLT<Matrix> llt(g);
  MetricAt out;
  out.metric = g;
  out.inverse = llt.solve(Matrix::Identity(g.rows(), g.cols()));
  out.inverse = 0.5 * (out.inverse + out.inverse.transpose());
  const Matrix L = llt.matrixL();
  double det = 1.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) det *= L(i, i) * L(i, i);
  out.det = det;
  return out;
}

MetricAt metric_inverse_and_det(const MetricField& m, const Point& theta, const SpdOptions& opts) {
  m.chart().require(theta);
  return check_spd(m(theta), opts);
}

std::vector<Matrix> metric_derivatives(const MetricField& m, const Point& theta, const FdOptions& opts) {
  std::vector<Matrix> dg;
  dg.reserve(static_cast<std::size_t>(theta.size()));
  auto eval = [&m](const Point& p) { return m(p); };
  for (int k = 0; k < theta.size(); ++k) dg.push_back(fd_partial(eval, theta, k, m.chart(), opts));
  return dg;
}

Tensor3 connection_from_derivatives(const std::vector<Matrix>& dg) {
  const int d = static_cast<int>(dg.size());
  Tensor3 gamma(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        gamma(i, j, k) = 0.5 * (dg[static_cast<std::size_t>(i)](j, k) + dg[static_cast<std::size_t>(j)](k, i) -
                                dg[static_cast<std::size_t>(k)](i, j));
  return gamma;
}

Tensor3 riemannian_connection(const MetricField& m, const Point& theta, const FdOptions& opts) {
  return connection_from_derivatives(metric_derivatives(m, theta, opts));
}

Vector connection_trace(const Tensor3& raised) {
  const int d = raised.dim();
  Vector t = Vector::Zero(d);
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i) t[k] += raised(k, i, i);
  return t;
}

Vector log_volume_gradient(const MetricField& m, const Point& theta, const FdOptions& opts) {
  auto half_log_det = [&m](const Point& p) { return 0.5 * std::log(check_spd(m(p)).det); };
  return fd_gradient(half_log_det, theta, m.chart(), opts);
}

double laplace_beltrami(const Matrix& inverse_metric, const Tensor3& gamma_lower, const Jet& f) {
  const Tensor3 gamma = raise_last(gamma_lower, inverse_metric);
  const int d = gamma.dim();
  double acc = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double inner = f.hessian(i, j);
      for (int k = 0; k < d; ++k) inner -= gamma(i, j, k) * f.gradient[k];
      acc += inverse_metric(i, j) * inner;
    }
  return acc;
}

double laplace_beltrami(const MetricField& m, const ScalarField& f, const Point& theta, const FdOptions& opts) {
  const MetricAt at = metric_inverse_and_det(m, theta);
  const Tensor3 gamma = riemannian_connection(m, theta, opts);
  return laplace_beltrami(at.inverse, gamma, f.jet(theta, opts));
}

MetricField pushforward_metric(const MetricField& m, const Chart& chart_from, const Chart& chart_to) {
  if (chart_from.dim() != chart_to.dim() || m.dim() != chart_from.dim())
    fail(ErrorKind::ChartMismatch, "pushforward between charts '" + chart_from.name() + "' and '" + chart_to.name() +
                                       "' of different dimension");
  auto eval = [m, chart_from, chart_to](const Point& xi) {
    chart_to.require(xi);
    const Point ref = chart_to.to_reference(xi);
    const Point theta = chart_from.from_reference(ref);
    const Matrix J = chart_from.jacobian_from_reference(ref) * chart_to.jacobian_to_reference(xi);
    Matrix g = J.transpose() * m(theta) * J;
    return Matrix(0.5 * (g + g.transpose()));
  };
  const auto provenance =
      m.provenance() == MetricField::Provenance::Numeric ? MetricField::Provenance::Numeric
                                                         : MetricField::Provenance::DerivedByFormula;
  return MetricField(chart_to, std::move(eval), provenance);
}

ScalarField pullback_scalar(const ScalarField& f, const Chart& chart_to) {
  const Chart from = f.chart();
  return ScalarField(chart_to, [f, from, chart_to](const Point& xi) { return f(transfer(xi, chart_to, from)); });
}

MetricField scale_metric(const MetricField& m, double c) {
  if (!(c > 0.0)) fail(ErrorKind::Range, "metric rescaling constant must be positive");
  return MetricField(m.chart(), [m, c](const Point& p) { return Matrix(c * m(p)); }, m.provenance());
}

}  // namespace predmetric
