#include "predmetric/predictive.hpp"

#include "predmetric/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace predmetric {

// ---------------------------------------------------------------------------
// PredictiveDensity

PredictiveDensity::PredictiveDensity(Method method, int obs_dim, LogEval log_eval, std::string normalization,
                                     std::optional<GaussianForm> gaussian)
    : method_(method),
      obs_dim_(obs_dim),
      log_eval_(std::move(log_eval)),
      normalization_(std::move(normalization)),
      gaussian_(std::move(gaussian)) {
  if (!log_eval_) fail(ErrorKind::Spec, "predictive density without an evaluator");
}

double PredictiveDensity::log_density(std::span<const double> y) const {
  if (static_cast<int>(y.size()) != obs_dim_) fail(ErrorKind::Spec, "observation has the wrong dimension");
  return log_eval_(y);
}

void PredictiveDensity::log_density_batch(std::span<const double> ys, std::span<double> out) const {
  if (batch_) {
    batch_(ys, out);
    return;
  }
  const auto dim = static_cast<std::size_t>(obs_dim_);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = log_eval_(ys.subspan(j * dim, dim));
}

PredictiveDensity PredictiveDensity::with_batch(
    std::function<void(std::span<const double>, std::span<double>)> batch) const {
  PredictiveDensity copy = *this;
  copy.batch_ = std::move(batch);
  return copy;
}

std::string_view to_string(PredictiveDensity::Method m) noexcept {
  return m == PredictiveDensity::Method::ClosedForm ? "closed-form" : "quadrature";
}

// ---------------------------------------------------------------------------
// Normal

PredictiveDensity normal_predictive_uniform(const NormalPairSpec& spec, std::size_t n, const Vector& xbar) {
  if (n < 1) fail(ErrorKind::Range, "sample size must be at least 1");
  const int d = static_cast<int>(spec.sigma.rows());
  if (xbar.size() != d) fail(ErrorKind::Spec, "mean vector has the wrong dimension");
  const Matrix cov = spec.sigma_tilde + spec.sigma / static_cast<double>(n);
  const MetricAt at = check_spd(cov);
  const Matrix precision = at.inverse;
  const double log_norm = -0.5 * (d * std::log(2.0 * std::numbers::pi) + std::log(at.det));
  auto eval = [xbar, precision, log_norm, d](std::span<const double> y) {
    const Vector r = Eigen::Map<const Vector>(y.data(), d) - xbar;
    return log_norm - 0.5 * r.dot(precision * r);
  };
  return PredictiveDensity(PredictiveDensity::Method::ClosedForm, d, eval, "exact (Gaussian)",
                           GaussianForm{xbar, cov});
}

double normal_uniform_exact_risk(const NormalPairSpec& spec, std::size_t n) {
  if (n < 1) fail(ErrorKind::Range, "sample size must be at least 1");
  const Matrix m = check_spd(spec.sigma_tilde).inverse * spec.sigma / static_cast<double>(n);
  const Matrix id = Matrix::Identity(m.rows(), m.cols());
  return 0.5 * std::log((id + m).determinant());
}

// ---------------------------------------------------------------------------
// Poisson

namespace {

double count_value(double y) {
  if (!(y >= 0.0) || y != std::floor(y)) fail(ErrorKind::Domain, "Poisson observations must be non-negative integers");
  return y;
}

void check_totals(const PoissonPairSpec& spec, const Vector& totals, std::size_t n) {
  if (totals.size() != spec.s.size()) fail(ErrorKind::Spec, "count vector has the wrong dimension");
  if (n < 1) fail(ErrorKind::Range, "sample size must be at least 1");
  for (Eigen::Index i = 0; i < totals.size(); ++i) count_value(totals[i]);
}

// Product of negative-binomial pmfs: prior lambda^(shape0 - 1) per coordinate.
double negative_binomial_log(const Vector& s, const Vector& totals, double n, double shape0,
                             std::span<const double> y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double yi = count_value(y[static_cast<std::size_t>(i)]);
    const double se = s[i] / n;
    const double shape = totals[i] + shape0;
    acc += (yi > 0.0 ? yi * std::log(se) : 0.0) - (shape + yi) * std::log1p(se) + std::lgamma(shape + yi) -
           std::lgamma(shape) - std::lgamma(yi + 1.0);
  }
  return acc;
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log of the integrand after u = exp(2v): log 2 + 2 alpha v - sum c_i log(N + t_i + e^{2v}/s_i).
struct SteinIntegrand {
  Vector log_a;  // log(N + t_i)
  Vector log_s;
  Vector c;
  double alpha;

  double operator()(double v) const {
    double acc = std::numbers::ln2 + 2.0 * alpha * v;
    for (Eigen::Index i = 0; i < c.size(); ++i) acc -= c[i] * log_add_exp(log_a[i], 2.0 * v - log_s[i]);
    return acc;
  }
};

SteinIntegrand make_integrand(const Vector& s, const Vector& shift, const Vector& exponents, double n) {
  const int d = static_cast<int>(s.size());
  if (shift.size() != d || exponents.size() != d) fail(ErrorKind::Spec, "Stein integral inputs differ in length");
  const double alpha = 0.5 * d - 1.0;
  if (!(alpha > 0.0)) fail(ErrorKind::DivergentIntegral, "Stein integral needs d >= 3");
  if (!(alpha + exponents.sum() - 0.5 * d > 0.0) || !(2.0 * exponents.sum() > 2.0 * alpha))
    fail(ErrorKind::DivergentIntegral, "Stein integral does not converge for these counts");
  SteinIntegrand f;
  f.log_a = (shift.array() + n).log();
  f.log_s = s.array().log();
  f.c = exponents;
  f.alpha = alpha;
  return f;
}

// Bisection for the point where the concave g drops to `level`, between an
// interior point `inside` (g > level) and `outside` (g < level).
double level_crossing(const SteinIntegrand& g, double inside, double outside, double level) {
  for (int it = 0; it < 200 && std::abs(outside - inside) > 1e-9; ++it) {
    const double mid = 0.5 * (inside + outside);
    (g(mid) > level ? inside : outside) = mid;
  }
  return outside;
}

struct Peak {
  double v;
  double value;
};

Peak find_peak(const SteinIntegrand& g) {
  // g is concave with g'(v) = 2 alpha - 2 sum c_i logistic(2v - log s_i - log a_i), decreasing in v.
  auto slope = [&g](double v) {
    double acc = 2.0 * g.alpha;
    for (Eigen::Index i = 0; i < g.c.size(); ++i) {
      const double z = 2.0 * v - g.log_s[i] - g.log_a[i];
      acc -= 2.0 * g.c[i] / (1.0 + std::exp(-z));
    }
    return acc;
  };
  double lo = -1.0, hi = 1.0;
  while (slope(lo) <= 0.0) lo *= 2.0;
  while (slope(hi) >= 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  const double v = 0.5 * (lo + hi);
  return {v, g(v)};
}

}  // namespace

double poisson_stein_log_integral(const Vector& s, const Vector& shift, const Vector& exponents, double n,
                                  const SteinIntegralOptions& opts) {
  const SteinIntegrand g = make_integrand(s, shift, exponents, n);
  const Peak peak = find_peak(g);
  const double level = peak.value - 45.0;
  double left = peak.v - 1.0;
  while (g(left) > level) left -= 2.0 * (peak.v - left);
  double right = peak.v + 1.0;
  while (g(right) > level) right += 2.0 * (right - peak.v);
  left = level_crossing(g, peak.v, left, level);
  right = level_crossing(g, peak.v, right, level);

  // Trapezoid sums with step halving; each level adds only the new midpoints.
  int intervals = 64;
  double h = (right - left) / intervals;
  double sum = 0.5 * (std::exp(g(left) - peak.value) + std::exp(g(right) - peak.value));
  for (int k = 1; k < intervals; ++k) sum += std::exp(g(left + k * h) - peak.value);
  double previous = sum * h;
  for (int it = 0; it < opts.max_halvings; ++it) {
    for (int k = 0; k < intervals; ++k) sum += std::exp(g(left + (k + 0.5) * h) - peak.value);
    intervals *= 2;
    h *= 0.5;
    const double current = sum * h;
    if (std::abs(current - previous) <= opts.rel_tol * current) return peak.value + std::log(current);
    previous = current;
  }
  fail(ErrorKind::Integration, "Stein u-integral did not converge under step halving");
}

double poisson_stein_log_integral_kronrod(const Vector& s, const Vector& shift, const Vector& exponents, double n) {
  const SteinIntegrand g = make_integrand(s, shift, exponents, n);
  const Peak peak = find_peak(g);
  // v = log w, w = t / (1 - t): dv = dt / (t (1 - t)).
  auto integrand = [&](double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double v = std::log(t) - std::log1p(-t);
    return std::exp(g(v) - peak.value) / (t * (1.0 - t));
  };
  const double t_peak = 1.0 / (1.0 + std::exp(-peak.v));
  quadrature::AdaptiveOptions opts;
  opts.abs_tol = 1e-13;
  opts.rel_tol = 1e-12;
  opts.max_depth = 40;
  const double value =
      quadrature::gauss_kronrod(integrand, 0.0, t_peak, opts).value + quadrature::gauss_kronrod(integrand, t_peak, 1.0, opts).value;
  return peak.value + std::log(value);
}

PredictiveDensity poisson_predictive_P(const PoissonPairSpec& spec, const Vector& totals, std::size_t n) {
  check_totals(spec, totals, n);
  const Vector s = spec.s;
  const double nn = static_cast<double>(n);
  auto eval = [s, totals, nn](std::span<const double> y) { return negative_binomial_log(s, totals, nn, 0.5, y); };
  return PredictiveDensity(PredictiveDensity::Method::ClosedForm, static_cast<int>(s.size()), eval,
                           "exact (negative binomial product)");
}

namespace {

// Trapezoid on one u-grid shared by all y in a box.
class SteinSharedGrid {
 public:
  SteinSharedGrid(const Vector& s, const Vector& totals, double n, const Vector& y_max) : s_(s), n_(n) {
    const int d = static_cast<int>(s.size());
    const Vector lo_shape = totals.array() + 0.5;
    const Vector hi_shape = lo_shape + y_max;
    double left = std::numeric_limits<double>::infinity(), right = -left, width = left;
    for (const Vector* shape : {&lo_shape, &hi_shape}) {
      const SteinIntegrand g = make_integrand(s, s, *shape, n);
      const Peak peak = find_peak(g);
      const double level = peak.value - 45.0;
      double l = peak.v - 1.0, r = peak.v + 1.0;
      while (g(l) > level) l -= 2.0 * (peak.v - l);
      while (g(r) > level) r += 2.0 * (r - peak.v);
      left = std::min(left, level_crossing(g, peak.v, l, level));
      right = std::max(right, level_crossing(g, peak.v, r, level));
      double curvature = 0.0;
      for (int i = 0; i < d; ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-(2.0 * peak.v - g.log_s[i] - g.log_a[i])));
        curvature += 4.0 * g.c[i] * sig * (1.0 - sig);
      }
      width = std::min(width, 1.0 / std::sqrt(curvature));
    }
    const int intervals = 2 * static_cast<int>(std::ceil((right - left) / (width / 4.0) / 2.0));
    const double h = (right - left) / intervals;
    const double alpha = 0.5 * d - 1.0;
    base_.resize(static_cast<std::size_t>(intervals) + 1);
    table_.resize(base_.size() * static_cast<std::size_t>(d));
    for (int k = 0; k <= intervals; ++k) {
      const double v = left + k * h;
      const double w = (k == 0 || k == intervals) ? 0.5 : 1.0;
      base_[static_cast<std::size_t>(k)] = std::log(w * h) + std::numbers::ln2 + 2.0 * alpha * v;
      for (int i = 0; i < d; ++i)
        table_[static_cast<std::size_t>(k) * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] =
            log_add_exp(std::log(n + s[i]), 2.0 * v - std::log(s[i]));
    }
  }

  // The log-integrand is concave along the grid: locate its peak by bisection on
  // the discrete slope, then sum outward until the terms drop 40 below it.
  double log_integral(std::span<const double> shape) const {
    const std::size_t d = shape.size();
    const std::size_t m = base_.size();
    auto term = [&](std::size_t k) {
      double acc = base_[k];
      const double* row = table_.data() + k * d;
      for (std::size_t i = 0; i < d; ++i) acc -= shape[i] * row[i];
      return acc;
    };
    std::size_t lo = 0, hi = m - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (term(mid + 1) > term(mid) ? lo : hi) = mid;
    }
    const std::size_t peak = term(lo) > term(hi) ? lo : hi;
    if (peak == 0 || peak + 1 == m) return fallback(shape);
    const double top = term(peak);
    // Wide integrands skip nodes: stride keeps about four nodes per local width.
    const double width_nodes = 1.0 / std::sqrt(std::max(2.0 * top - term(peak - 1) - term(peak + 1), 1e-300));
    std::size_t stride = 1;
    while (static_cast<double>(2 * stride) <= width_nodes / 4.0) stride *= 2;
    // Terms are collected peak-outward; the coarse sum keeps every other one.
    thread_local std::vector<double> fine, coarse;
    fine.assign(1, top);
    coarse.assign(1, top);
    for (int dir : {-1, 1}) {
      std::size_t k = peak, j = 0;
      double t = top;
      while (t - top > -40.0) {
        if ((dir < 0 && k < stride) || (dir > 0 && k + stride >= m)) return fallback(shape);
        k = dir < 0 ? k - stride : k + stride;
        t = term(k);
        fine.push_back(t);
        if (++j % 2 == 0) coarse.push_back(t);
      }
    }
    const double total = kernels::logsumexp(fine) + std::log(static_cast<double>(stride));
    // Same rule at twice the step. Trapezoid error on an analytic integrand
    // decays like exp(-C/h), so the error at h is about the square of the
    // error at 2h.
    const double rough = kernels::logsumexp(coarse) + std::log(2.0 * static_cast<double>(stride));
    if (std::abs(rough - total) > 1e-7) return fallback(shape);
    return total;
  }

 private:
  double fallback(std::span<const double> shape) const {
    return poisson_stein_log_integral(s_, s_, Eigen::Map<const Vector>(shape.data(), s_.size()), n_);
  }

  Vector s_;
  double n_;
  std::vector<double> base_;
  std::vector<double> table_;
};

}  // namespace

PredictiveDensity poisson_predictive_S(const PoissonPairSpec& spec, const Vector& totals, std::size_t n,
                                       const std::optional<Vector>& y_max) {
  check_totals(spec, totals, n);
  const int d = static_cast<int>(spec.s.size());
  const Vector s = spec.s;
  const double nn = static_cast<double>(n);
  if (d == 2) {
    PredictiveDensity p = poisson_predictive_P(spec, totals, n);
    return p;
  }
  if (d == 1) {
    // Ratio lambda^(1/2): flat prior, gamma posterior with shape X + 1.
    auto eval = [s, totals, nn](std::span<const double> y) { return negative_binomial_log(s, totals, nn, 1.0, y); };
    return PredictiveDensity(PredictiveDensity::Method::ClosedForm, 1, eval, "exact (negative binomial, d = 1)");
  }
  const Vector half_shape = totals.array() + 0.5;
  const double log_den = poisson_stein_log_integral(s, Vector::Zero(d), half_shape, nn);
  std::shared_ptr<const SteinSharedGrid> shared;
  if (y_max) {
    if (y_max->size() != d) fail(ErrorKind::Spec, "y_max has the wrong dimension");
    shared = std::make_shared<const SteinSharedGrid>(s, totals, nn, *y_max);
  }
  // Count-dependent closed-form factor per coordinate, tabulated over the y_max box.
  std::shared_ptr<std::vector<std::vector<double>>> factor;
  if (y_max) {
    factor = std::make_shared<std::vector<std::vector<double>>>(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      auto& row = (*factor)[static_cast<std::size_t>(i)];
      for (int y = 0; y <= static_cast<int>((*y_max)[i]); ++y)
        row.push_back((y > 0 ? y * std::log(s[i]) : 0.0) + std::lgamma(half_shape[i] + y) - std::lgamma(half_shape[i]) -
                      std::lgamma(y + 1.0));
    }
  }
  auto eval = [s, totals, nn, half_shape, log_den, d, shared, factor](std::span<const double> y) {
    thread_local std::vector<double> shape;
    shape.resize(static_cast<std::size_t>(d));
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const double yi = count_value(y[iu]);
      shape[iu] = half_shape[i] + yi;
      if (factor && yi < static_cast<double>((*factor)[iu].size()))
        acc += (*factor)[iu][static_cast<std::size_t>(yi)];
      else
        acc += (yi > 0.0 ? yi * std::log(s[i]) : 0.0) + std::lgamma(shape[iu]) - std::lgamma(half_shape[i]) -
               std::lgamma(yi + 1.0);
    }
    const double integral = shared ? shared->log_integral(shape)
                                   : poisson_stein_log_integral(s, s, Eigen::Map<const Vector>(shape.data(), d), nn);
    return acc + integral - log_den;
  };
  return PredictiveDensity(PredictiveDensity::Method::ClosedForm, d, eval, "exact up to the u-integral (trapezoid in log u)");
}

// ---------------------------------------------------------------------------
// Posterior grid

namespace {

struct LogTransform {
  std::vector<bool> positive;

  Point to_eta(const Point& theta) const {
    Point eta = theta;
    for (std::size_t i = 0; i < positive.size(); ++i)
      if (positive[i]) eta[static_cast<Eigen::Index>(i)] = std::log(theta[static_cast<Eigen::Index>(i)]);
    return eta;
  }
  Point to_theta(const Point& eta) const {
    Point theta = eta;
    for (std::size_t i = 0; i < positive.size(); ++i)
      if (positive[i]) theta[static_cast<Eigen::Index>(i)] = std::exp(eta[static_cast<Eigen::Index>(i)]);
    return theta;
  }
  double log_jacobian(const Point& eta) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < positive.size(); ++i)
      if (positive[i]) acc += eta[static_cast<Eigen::Index>(i)];
    return acc;
  }
};

LogTransform transform_for(const Chart& chart) {
  LogTransform t;
  for (int i = 0; i < chart.dim(); ++i) t.positive.push_back(chart.positive(i));
  return t;
}

Point default_start(const ModelPair& pair, const Dataset& data) {
  const int d = pair.dim();
  Point start(d);
  const std::size_t n = data.size();
  switch (pair.family()) {
    case Family::Normal: {
      start.setZero();
      for (std::size_t i = 0; i < n; ++i) start += Eigen::Map<const Vector>(data.row(i).data(), d);
      return start / static_cast<double>(n);
    }
    case Family::LocationScale: {
      double mean = 0.0;
      for (double x : data.values) mean += x;
      mean /= static_cast<double>(n);
      const double ss = kernels::sum_squared_deviation(data.values, mean);
      const double sd = std::sqrt(ss / static_cast<double>(n));
      start << mean, sd > 0.0 ? sd : 1.0;
      return start;
    }
    case Family::Poisson: {
      start.setConstant(0.5);
      for (std::size_t i = 0; i < n; ++i) start += Eigen::Map<const Vector>(data.row(i).data(), d);
      return start / static_cast<double>(n);
    }
    case Family::Custom:
      break;
  }
  for (int i = 0; i < d; ++i) start[i] = pair.chart().positive(i) ? 1.0 : 0.0;
  return start;
}

struct ModeResult {
  Point eta;
  Matrix neg_hessian;
};

ModeResult find_mode(const ModelPair& pair, const PreparedLikelihood& lik, const PriorSpec& prior, const Point& start) {
  const LogTransform tr = transform_for(pair.chart());
  const Chart eta_chart = Chart::reference("eta", pair.dim());
  auto h = [&](const Point& eta) {
    const Point theta = tr.to_theta(eta);
    const double v = lik.eval(theta) + prior.log_density(theta) + tr.log_jacobian(eta);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  pair.chart().require(start);
  Point eta = tr.to_eta(start);
  double current = h(eta);
  if (!std::isfinite(current)) fail(ErrorKind::Window, "posterior is not finite at the mode-search start");
  for (int it = 0; it < 200; ++it) {
    const Vector g = fd_gradient(h, eta, eta_chart);
    const Matrix H = fd_hessian(h, eta, eta_chart);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(-H);
    Vector step;
    if (eig.eigenvalues().minCoeff() > 0.0)
      step = eig.eigenvectors() * (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * g));
    else
      step = g / std::max(1.0, g.norm());
    const double limit = step.cwiseAbs().maxCoeff();
    if (limit > 2.0) step *= 2.0 / limit;
    double t = 1.0;
    Point trial = eta + step;
    double value = h(trial);
    while (!(value >= current - 1e-13 * std::abs(current)) && t > 1e-12) {
      t *= 0.5;
      trial = eta + t * step;
      value = h(trial);
    }
    const double moved = (t * step).cwiseAbs().maxCoeff();
    eta = trial;
    current = value;
    if (moved < 1e-10 && eig.eigenvalues().minCoeff() > 0.0) break;
  }
  const Matrix H = fd_hessian(h, eta, eta_chart);
  return {eta, -0.5 * (H + H.transpose())};
}

}  // namespace

Point posterior_mode(const ModelPair& pair, const Dataset& data, const PriorSpec& prior, const std::optional<Point>& start) {
  const auto lik = pair.x_model().prepare_likelihood(data);
  const ModeResult mode = find_mode(pair, *lik, prior, start ? *start : default_start(pair, data));
  return transform_for(pair.chart()).to_theta(mode.eta);
}

PosteriorGrid PosteriorGrid::build(const ModelPair& pair, const Dataset& data, const PriorSpec& centring,
                                   const GridOptions& opts) {
  const int d = pair.dim();
  if (d > 2) fail(ErrorKind::Spec, "posterior grids support d <= 2");
  if (data.size() == 0) fail(ErrorKind::Spec, "posterior grid needs at least one observation");
  if (opts.nodes < 4) fail(ErrorKind::Spec, "posterior grid needs at least 4 nodes per axis");
  const auto lik = pair.x_model().prepare_likelihood(data);
  const LogTransform tr = transform_for(pair.chart());
  const ModeResult mode = find_mode(pair, *lik, centring, opts.start ? *opts.start : default_start(pair, data));

  Eigen::SelfAdjointEigenSolver<Matrix> eig(mode.neg_hessian);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) fail(ErrorKind::Window, "posterior is not locally concave at its mode");
  const Matrix L = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal();
  const double log_det_l = std::log(std::abs(L.determinant()));
  const int cap = d == 1 ? opts.max_nodes : std::max(opts.nodes, opts.max_nodes / 4);

  // Each side of each principal axis has its own edge (in Laplace sd). A side
  // starts where the log posterior has dropped by 45 along the axis, capped at
  // window_sds, and doubles only while its own shell holds too much mass.
  // Skewed posteriors in log coordinates (small counts) otherwise waste most
  // nodes beyond a cliff.
  auto log_post = [&](const Point& eta) {
    const Point theta = tr.to_theta(eta);
    const double v = lik->eval(theta) + centring.log_density(theta) + tr.log_jacobian(eta);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  Matrix edge(d, 2);
  if (opts.edges) {
    if (opts.edges->rows() != d || opts.edges->cols() != 2 || !(opts.edges->array() > 0.0).all())
      fail(ErrorKind::Spec, "grid edges must be a positive d x 2 matrix");
    edge = *opts.edges;
  } else {
    const double peak = log_post(mode.eta);
    for (int k = 0; k < d; ++k)
      for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        double t = 4.0;
        while (t < opts.window_sds && log_post(mode.eta + sign * t * L.col(k)) > peak - 45.0) t *= 1.25;
        edge(k, side) = std::min(t, opts.window_sds);
      }
  }

  auto shared_pair = std::make_shared<const ModelPair>(pair);
  auto make = [&](int n) {
    PosteriorGrid grid;
    grid.pair_ = shared_pair;
    grid.nodes_ = n;
    grid.edges_ = edge;
    grid.window_ = edge.maxCoeff();
    grid.shell_tol_ = opts.shell_tol;
    std::vector<quadrature::Rule> rules;
    for (int k = 0; k < d; ++k) rules.push_back(quadrature::gauss_legendre(n, -edge(k, 0), edge(k, 1)));
    const std::size_t m = rules[0].size();
    const std::size_t total = d == 1 ? m : m * m;
    grid.thetas_.reserve(total);
    grid.log_base_.reserve(total);
    grid.shell_.reserve(total);
    for (std::size_t a = 0; a < total; ++a) {
      const std::size_t i = a % m, j = a / m;
      Vector z(d);
      z[0] = rules[0].nodes[i];
      double w = rules[0].weights[i];
      if (d == 2) {
        z[1] = rules[1].nodes[j];
        w *= rules[1].weights[j];
      }
      const Point eta = mode.eta + L * z;
      const Point theta = tr.to_theta(eta);
      double lb = std::log(w) + log_det_l + tr.log_jacobian(eta) + lik->eval(theta);
      if (!std::isfinite(lb)) lb = -std::numeric_limits<double>::infinity();
      grid.thetas_.push_back(theta);
      grid.log_base_.push_back(lb);
      unsigned char sides = 0;
      for (int k = 0; k < d; ++k) {
        if (z[k] <= -0.875 * edge(k, 0)) sides |= static_cast<unsigned char>(1u << (2 * k));
        if (z[k] >= 0.875 * edge(k, 1)) sides |= static_cast<unsigned char>(1u << (2 * k + 1));
      }
      grid.shell_.push_back(sides);
    }
    grid.target_ = shared_pair->y_model().prepare_nodes(grid.thetas_);
    return grid;
  };

  int n = opts.nodes;
  PosteriorGrid grid = make(n);
  while (!opts.edges) {
    const std::vector<double> lj = grid.log_joint(centring);
    const double total = kernels::logsumexp(lj);
    bool grew = false;
    for (int k = 0; k < d; ++k)
      for (int side = 0; side < 2; ++side) {
        const unsigned bit = 1u << (2 * k + side);
        std::vector<double> shell;
        for (std::size_t m = 0; m < lj.size(); ++m)
          if (grid.shell_[m] & bit) shell.push_back(lj[m]);
        if (std::exp(kernels::logsumexp(shell) - total) <= opts.shell_tol) continue;
        edge(k, side) *= 2.0;
        if (edge(k, side) > opts.max_window_sds)
          fail(ErrorKind::Window, "posterior mass not captured within " + std::to_string(opts.max_window_sds) +
                                      " Laplace standard deviations");
        grew = true;
      }
    if (!grew) break;
    n = std::min(2 * n, cap);
    grid = make(n);
  }
  if (!opts.refine) return grid;
  double evidence = grid.log_evidence(centring);
  // Window growth may already have used up the node budget; then the grid is
  // accepted if halving its nodes changes nothing.
  if (2 * n > cap) {
    if (std::abs(make(n / 2).log_evidence(centring) - evidence) <= opts.refine_tol) return grid;
    fail(ErrorKind::Integration, "posterior grid did not converge under node doubling");
  }
  while (true) {
    if (2 * n > cap) fail(ErrorKind::Integration, "posterior grid did not converge under node doubling");
    n *= 2;
    PosteriorGrid finer = make(n);
    const double e2 = finer.log_evidence(centring);
    if (std::abs(e2 - evidence) <= opts.refine_tol) return finer;
    grid = std::move(finer);
    evidence = e2;
  }
}

std::vector<double> PosteriorGrid::log_joint(const PriorSpec& prior) const {
  std::vector<double> out(thetas_.size());
  for (std::size_t m = 0; m < thetas_.size(); ++m) {
    const double lb = log_base_[m];
    out[m] = std::isfinite(lb) ? lb + prior.log_density(thetas_[m]) : lb;
  }
  return out;
}

double PosteriorGrid::log_evidence(const PriorSpec& prior) const { return kernels::logsumexp(log_joint(prior)); }

double PosteriorGrid::shell_fraction(const PriorSpec& prior) const {
  const std::vector<double> lj = log_joint(prior);
  std::vector<double> shell;
  for (std::size_t m = 0; m < lj.size(); ++m)
    if (shell_[m]) shell.push_back(lj[m]);
  return std::exp(kernels::logsumexp(shell) - kernels::logsumexp(lj));
}

std::vector<double> PosteriorGrid::log_posterior_weights(const PriorSpec& prior) const {
  std::vector<double> lj = log_joint(prior);
  const double total = kernels::logsumexp(lj);
  if (!std::isfinite(total)) fail(ErrorKind::Window, "posterior has no mass on the grid");
  double shell = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < lj.size(); ++m) {
    lj[m] -= total;
    if (shell_[m]) shell = log_add_exp(shell, lj[m]);
  }
  if (std::exp(shell) > shell_tol_)
    fail(ErrorKind::Window, "posterior under prior '" + prior.name() + "' leaks out of the quadrature window");
  return lj;
}

double PosteriorGrid::log_predictive(std::span<const double> log_weights, std::span<const double> y) const {
  std::vector<double> target(thetas_.size());
  target_->eval(y, target);
  return kernels::logsumexp_sum(log_weights, target);
}

PredictiveDensity PosteriorGrid::predictive(const PriorSpec& prior) const {
  auto weights = std::make_shared<const std::vector<double>>(log_posterior_weights(prior));
  auto grid = std::make_shared<const PosteriorGrid>(*this);
  const int dim = pair_->y_model().obs_dim();
  auto eval = [grid, weights](std::span<const double> y) { return grid->log_predictive(*weights, y); };
  auto batch = [grid, weights, dim](std::span<const double> ys, std::span<double> out) {
    std::vector<double> target(grid->size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      grid->target_->eval(ys.subspan(j * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)), target);
      out[j] = kernels::logsumexp_sum(*weights, target);
    }
  };
  char label[96];
  std::snprintf(label, sizeof label, "posterior grid %d^%d nodes, window +-%g sd", nodes_, pair_->dim(), window_);
  return PredictiveDensity(PredictiveDensity::Method::Quadrature, dim, eval, label).with_batch(batch);
}

double quadrature_predictive(const ModelPair& pair, const PriorSpec& prior, const Dataset& data,
                             std::span<const double> y, const GridOptions& opts) {
  PosteriorGrid grid = PosteriorGrid::build(pair, data, prior, opts);
  double value = grid.log_predictive(grid.log_posterior_weights(prior), y);
  if (!opts.refine) return std::exp(value);
  const int cap = pair.dim() == 1 ? opts.max_nodes : std::max(opts.nodes, opts.max_nodes / 4);
  GridOptions fixed = opts;
  fixed.refine = false;
  fixed.edges = grid.edges();
  auto at = [&](int n) {
    fixed.nodes = n;
    const PosteriorGrid g = PosteriorGrid::build(pair, data, prior, fixed);
    return g.log_predictive(g.log_posterior_weights(prior), y);
  };
  // Compare with the next coarser grid first, then keep doubling.
  double previous = at(grid.nodes_per_axis() / 2);
  for (int n = grid.nodes_per_axis();; n *= 2) {
    if (std::abs(value - previous) <= opts.refine_tol) return std::exp(value);
    if (2 * n > cap) break;
    previous = value;
    value = at(2 * n);
  }
  fail(ErrorKind::Integration, "predictive value did not converge under node doubling");
}

}  // namespace predmetric
