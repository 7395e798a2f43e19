#include "predmetric/priors.hpp"

#include <array>
#include <cmath>
#include <random>

namespace predmetric {

PriorSpec::PriorSpec(std::string name, ScalarField ratio, LogDensity log_pi_p, std::string closed_form, PriorKind kind)
    : name_(std::move(name)),
      ratio_(std::move(ratio)),
      log_pi_p_(std::move(log_pi_p)),
      closed_form_(std::move(closed_form)),
      kind_(kind) {
  if (!log_pi_p_) fail(ErrorKind::Spec, "prior '" + name_ + "' has no volume-element density");
}

double PriorSpec::log_density(const Point& theta) const {
  const double f = ratio_(theta);
  if (!(f > 0.0) || !std::isfinite(f)) fail(ErrorKind::NonPositiveRatio, "prior '" + name_ + "' ratio is not positive");
  return std::log(f) + log_pi_p_(theta);
}

PriorSpec PriorSpec::renamed(std::string name) const {
  PriorSpec out = *this;
  out.name_ = std::move(name);
  return out;
}

double ratio_coefficient_of_variation(const PriorSpec& a, const PriorSpec& b, const std::vector<Point>& probes) {
  if (probes.empty()) fail(ErrorKind::Spec, "no probes for prior comparison");
  std::vector<double> logs;
  logs.reserve(probes.size());
  for (const Point& p : probes) logs.push_back(a.log_density(p) - b.log_density(p));
  const double ref = logs.front();
  double mean = 0.0, sq = 0.0;
  for (double l : logs) mean += std::exp(l - ref);
  mean /= static_cast<double>(logs.size());
  for (double l : logs) {
    const double r = std::exp(l - ref) - mean;
    sq += r * r;
  }
  return std::sqrt(sq / static_cast<double>(logs.size())) / mean;
}

bool equal_up_to_constant(const PriorSpec& a, const PriorSpec& b, const std::vector<Point>& probes, double rel_tol) {
  return ratio_coefficient_of_variation(a, b, probes) <= rel_tol;
}

namespace {

PriorSpec::LogDensity pair_log_volume(const ModelPair& pair) {
  switch (pair.family()) {
    case Family::Normal:
      return [](const Point&) { return 0.0; };
    case Family::LocationScale:
      return [](const Point& theta) { return -2.0 * std::log(theta[1]); };
    case Family::Poisson:
      return [](const Point& lambda) { return -0.5 * lambda.array().log().sum(); };
    case Family::Custom:
      break;
  }
  return [pair](const Point& theta) {
    const double det_g = check_spd(pair.x_tensors().metric(theta)).det;
    const double det_gt = check_spd(pair.y_tensors().metric(theta)).det;
    return std::log(det_g) - 0.5 * std::log(det_gt);
  };
}

// f = n / den with analytic derivatives of numerator and denominator.
struct Quotient {
  std::function<Jet(const Point&)> numerator;
  std::function<Jet(const Point&)> denominator;

  double value(const Point& p) const { return numerator(p).value / denominator(p).value; }
  Vector gradient(const Point& p) const {
    const Jet n = numerator(p), d = denominator(p);
    return n.gradient / d.value - n.value * d.gradient / (d.value * d.value);
  }
  Matrix hessian(const Point& p) const {
    const Jet n = numerator(p), d = denominator(p);
    const double D = d.value, D2 = D * D, D3 = D2 * D;
    const Matrix cross = n.gradient * d.gradient.transpose();
    return n.hessian / D - (cross + cross.transpose()) / D2 - n.value * d.hessian / D2 +
           2.0 * n.value * (d.gradient * d.gradient.transpose()) / D3;
  }
  ScalarField field(const Chart& chart) const {
    const Quotient q = *this;
    return ScalarField(
        chart, [q](const Point& p) { return q.value(p); }, [q](const Point& p) { return q.gradient(p); },
        [q](const Point& p) { return q.hessian(p); });
  }
};

const LocationScaleConstants& require_location_scale(const ModelPair& pair, const char* what) {
  const LocationScaleConstants* c = pair.location_scale();
  if (!c) fail(ErrorKind::Spec, std::string(what) + " needs a location-scale model pair");
  return *c;
}

// sigma
Jet sigma_jet(const Point& p) {
  Jet j{p[1], Vector::Zero(2), Matrix::Zero(2, 2)};
  j.gradient[1] = 1.0;
  return j;
}

// q mu^2 + sigma^2 + extra_linear * sigma + constant
Jet hyperbolic_denominator(const Point& p, double q, double linear, double constant) {
  Jet j;
  j.value = q * p[0] * p[0] + p[1] * p[1] + linear * p[1] + constant;
  j.gradient = Vector(2);
  j.gradient << 2.0 * q * p[0], 2.0 * p[1] + linear;
  j.hessian = Matrix::Zero(2, 2);
  j.hessian(0, 0) = 2.0 * q;
  j.hessian(1, 1) = 2.0;
  return j;
}

}  // namespace

PriorSpec volume_element_prior(const ModelPair& pair) {
  return PriorSpec("pi_P", ScalarField::constant(pair.chart(), 1.0), pair_log_volume(pair), "|g| |g~|^(-1/2)", PriorKind::VolumeElement);
}

PriorSpec volume_element_prior(const MetricField& predictive_metric) {
  auto log_vol = [predictive_metric](const Point& theta) {
    return 0.5 * std::log(check_spd(predictive_metric(theta)).det);
  };
  return PriorSpec("pi_P", ScalarField::constant(predictive_metric.chart(), 1.0), log_vol, "|g°|^(1/2)", PriorKind::VolumeElement);
}

PriorSpec jeffreys_prior(const ModelPair& pair) {
  const ModelPair copy = pair;
  auto ratio = [copy](const Point& theta) {
    const double det_g = check_spd(copy.x_tensors().metric(theta)).det;
    const double det_gt = check_spd(copy.y_tensors().metric(theta)).det;
    return std::sqrt(det_gt / det_g);
  };
  return PriorSpec("jeffreys", ScalarField(pair.chart(), ratio), pair_log_volume(pair), "|g|^(1/2)", PriorKind::Jeffreys);
}

double cosh_rho(const LocationScaleConstants& c, double kappa, double mu, double sigma) {
  return (c.location_weight() * mu * mu + sigma * sigma + kappa * kappa) / (2.0 * sigma * kappa);
}

PriorSpec prior_right_invariant(const ModelPair& pair) {
  require_location_scale(pair, "pi_R");
  ScalarField ratio(
      pair.chart(), [](const Point& p) { return p[1]; },
      [](const Point&) {
        Vector g(2);
        g << 0.0, 1.0;
        return g;
      },
      [](const Point&) { return Matrix(Matrix::Zero(2, 2)); });
  return PriorSpec("pi_R", std::move(ratio), pair_log_volume(pair), "1/sigma", PriorKind::RightInvariant);
}

PriorSpec prior_ckappa(const ModelPair& pair, const CkappaParams& params) {
  const LocationScaleConstants& c = require_location_scale(pair, "pi_{c,kappa}");
  if (!(params.kappa > 0.0) || !std::isfinite(params.kappa)) fail(ErrorKind::Spec, "kappa must be positive");
  if (!(params.c >= 0.0) || !std::isfinite(params.c)) fail(ErrorKind::Spec, "c must be non-negative");
  const double q = c.location_weight();
  const double kappa = params.kappa;
  const double cc = params.c;
  Quotient quotient{
      [kappa](const Point& p) {
        Jet j = sigma_jet(p);
        j.value *= 2.0 * kappa;
        j.gradient *= 2.0 * kappa;
        return j;
      },
      [q, kappa, cc](const Point& p) { return hyperbolic_denominator(p, q, 2.0 * cc * kappa, kappa * kappa); }};
  char name[96];
  std::snprintf(name, sizeof name, "pi_ckappa(c=%.17g,kappa=%.17g)", cc, kappa);
  return PriorSpec(name, quotient.field(pair.chart()), pair_log_volume(pair), "1/(cosh rho + c) / sigma^2", PriorKind::Ckappa);
}

PriorSpec prior_cauchy(const ModelPair& pair) {
  const LocationScaleConstants& c = require_location_scale(pair, "pi_C");
  const double q = c.location_weight();
  Quotient quotient{sigma_jet, [q](const Point& p) { return hyperbolic_denominator(p, q, 0.0, 0.0); }};
  return PriorSpec("pi_C", quotient.field(pair.chart()), pair_log_volume(pair), "1/(sigma (q mu^2 + sigma^2))", PriorKind::Cauchy);
}

PriorSpec prior_stein_poisson(const ModelPair& pair) {
  const PoissonPairSpec* spec = pair.poisson_spec();
  if (!spec) fail(ErrorKind::Spec, "pi_S needs a Poisson model pair");
  const Vector s = spec->s;
  const double alpha = 0.5 * static_cast<double>(s.size()) - 1.0;
  const Vector inv_s = s.cwiseInverse();
  ScalarField ratio(
      pair.chart(), [inv_s, alpha](const Point& l) { return std::pow(l.dot(inv_s), -alpha); },
      [inv_s, alpha](const Point& l) {
        const double S = l.dot(inv_s);
        return Vector(-alpha * std::pow(S, -alpha - 1.0) * inv_s);
      },
      [inv_s, alpha](const Point& l) {
        const double S = l.dot(inv_s);
        return Matrix(alpha * (alpha + 1.0) * std::pow(S, -alpha - 2.0) * (inv_s * inv_s.transpose()));
      });
  return PriorSpec("pi_S", std::move(ratio), pair_log_volume(pair), "(sum lambda_i/s_i)^-(d/2-1) prod lambda_i^-1/2",
                   PriorKind::SteinPoisson);
}

PriorSpec power_prior(const PriorSpec& prior, double c) {
  if (!(c > 0.0 && c <= 1.0)) fail(ErrorKind::Range, "power prior exponent must lie in (0, 1]");
  if (c == 1.0) return prior;
  char name[64];
  std::snprintf(name, sizeof name, "^%.17g", c);
  return PriorSpec(prior.name() + name, prior.ratio().power(c),
                   [prior](const Point& p) { return prior.log_volume_element(p); }, {}, PriorKind::Power);
}

PriorSpec prior_from_ratio(const ModelPair& pair, std::string name, ScalarField ratio) {
  return PriorSpec(std::move(name), std::move(ratio), pair_log_volume(pair));
}

PriorSpec random_bump_prior(const ModelPair& pair, const Vector& lo, const Vector& hi, std::uint64_t seed,
                            const BumpPriorOptions& opts) {
  const int d = pair.dim();
  if (lo.size() != d || hi.size() != d) fail(ErrorKind::Spec, "bump box has wrong dimension");
  if (!(opts.eps > 0.0 && opts.eps <= 0.5)) fail(ErrorKind::Range, "bump amplitude must lie in (0, 0.5]");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Bump {
    double amplitude;
    Vector centre;
    Vector inv_width2;
  };
  std::vector<Bump> bumps;
  const int m = std::max(opts.bumps, 1);
  for (int b = 0; b < m; ++b) {
    Bump bump{(2.0 * unit(rng) - 1.0) / m, Vector(d), Vector(d)};
    for (int i = 0; i < d; ++i) {
      const double extent = hi[i] - lo[i];
      bump.centre[i] = lo[i] + extent * unit(rng);
      const double w = extent * (opts.min_width + (opts.max_width - opts.min_width) * unit(rng));
      bump.inv_width2[i] = 1.0 / (w * w);
    }
    bumps.push_back(std::move(bump));
  }
  const double eps = opts.eps;
  auto terms = [bumps, eps](const Point& p, Jet& out) {
    const int dim = static_cast<int>(p.size());
    out.value = 1.0;
    out.gradient = Vector::Zero(dim);
    out.hessian = Matrix::Zero(dim, dim);
    for (const Bump& b : bumps) {
      const Vector r = p - b.centre;
      const Vector wr = b.inv_width2.cwiseProduct(r);
      const double e = eps * b.amplitude * std::exp(-0.5 * r.dot(wr));
      out.value += e;
      out.gradient -= e * wr;
      out.hessian += e * (wr * wr.transpose());
      out.hessian.diagonal() -= e * b.inv_width2;
    }
  };
  ScalarField ratio(
      pair.chart(),
      [terms](const Point& p) {
        Jet j;
        terms(p, j);
        return j.value;
      },
      [terms](const Point& p) {
        Jet j;
        terms(p, j);
        return j.gradient;
      },
      [terms](const Point& p) {
        Jet j;
        terms(p, j);
        return j.hessian;
      });
  return PriorSpec("bump#" + std::to_string(seed), std::move(ratio), pair_log_volume(pair), {}, PriorKind::Bump);
}

// ---------------------------------------------------------------------------
// Probes

namespace {

double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

constexpr std::array<unsigned, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

std::vector<Point> make_probes(const Chart& chart, const Vector& lo, const Vector& hi, int count,
                               const std::vector<Point>& explicit_points) {
  const int d = chart.dim();
  if (lo.size() != d || hi.size() != d) fail(ErrorKind::Spec, "probe box has wrong dimension");
  if (d > static_cast<int>(kPrimes.size())) fail(ErrorKind::Spec, "probe generation supports d <= 16");
  std::vector<Point> probes;
  for (const Point& p : explicit_points) {
    chart.require(p);
    probes.push_back(p);
  }
  for (int i = 0; i < d; ++i) {
    if (!(lo[i] <= hi[i])) fail(ErrorKind::Spec, "probe box has lo > hi");
    if (chart.positive(i) && !(lo[i] > 0.0)) fail(ErrorKind::Spec, "probe box must stay inside positive coordinates");
  }
  for (int n = 0; n < count; ++n) {
    Point p(d);
    for (int i = 0; i < d; ++i) {
      // Skip the first index: the all-zero Halton point sits on the box corner.
      const double t = radical_inverse(static_cast<std::uint64_t>(n) + 1, kPrimes[static_cast<std::size_t>(i)]);
      p[i] = chart.positive(i) ? lo[i] * std::pow(hi[i] / lo[i], t) : lo[i] + (hi[i] - lo[i]) * t;
    }
    probes.push_back(std::move(p));
  }
  return probes;
}

std::string_view to_string(SuperharmonicVerdict v) noexcept {
  switch (v) {
    case SuperharmonicVerdict::Superharmonic: return "SUPERHARMONIC";
    case SuperharmonicVerdict::StrictSomewhere: return "STRICT_SOMEWHERE";
    case SuperharmonicVerdict::Violated: return "VIOLATED";
  }
  return "UNKNOWN";
}

SuperharmonicReport superharmonic_check(const ScalarField& f, const MetricField& m, const std::vector<Point>& probes,
                                        const SuperharmonicOptions& opts) {
  if (probes.empty()) fail(ErrorKind::Spec, "superharmonic check needs at least one probe");
  SuperharmonicReport report;
  bool violated = false, strict = false;
  for (const Point& theta : probes) {
    const MetricAt at = metric_inverse_and_det(m, theta);
    const Tensor3 gamma = raise_last(riemannian_connection(m, theta, opts.fd), at.inverse);
    const Jet jet = f.jet(theta, opts.fd);
    if (!(jet.value > 0.0)) fail(ErrorKind::NonPositiveRatio, "superharmonic check on a non-positive function");
    const int d = m.dim();
    double value = 0.0, scale = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const double gij = at.inverse(i, j);
        value += gij * jet.hessian(i, j);
        scale += std::abs(gij * jet.hessian(i, j));
        for (int k = 0; k < d; ++k) {
          const double t = gij * gamma(i, j, k) * jet.gradient[k];
          value -= t;
          scale += std::abs(t);
        }
      }
    const double tol = opts.abs_tol ? *opts.abs_tol : opts.rel_tol * scale;
    report.laplacian.push_back(value);
    report.tolerance.push_back(tol);
    if (report.laplacian.size() == 1 || value > report.max_laplacian) {
      report.max_laplacian = value;
      report.argmax = theta;
    }
    if (report.laplacian.size() == 1 || value < report.min_laplacian) {
      report.min_laplacian = value;
      report.argmin = theta;
    }
    if (value > tol) violated = true;
    if (value < -tol) strict = true;
  }
  report.verdict = violated ? SuperharmonicVerdict::Violated
                   : strict ? SuperharmonicVerdict::StrictSomewhere
                            : SuperharmonicVerdict::Superharmonic;
  return report;
}

}  // namespace predmetric
