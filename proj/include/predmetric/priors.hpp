#pragma once

// Priors stored as the positive ratio f = pi / pi_P to the volume-element
// prior pi_P ∝ |g| |g~|^(-1/2) = |g°|^(1/2), plus a superharmonicity checker
// under the predictive metric g°.

#include "predmetric/geometry.hpp"
#include "predmetric/models.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace predmetric {

enum class PriorKind { VolumeElement, Jeffreys, RightInvariant, Ckappa, Cauchy, SteinPoisson, Power, Bump, Custom };

class PriorSpec {
 public:
  using LogDensity = std::function<double(const Point&)>;

  // `log_pi_p` gives log pi_P up to an additive constant.
  PriorSpec(std::string name, ScalarField ratio, LogDensity log_pi_p, std::string closed_form = {},
            PriorKind kind = PriorKind::Custom);

  const std::string& name() const noexcept { return name_; }
  const ScalarField& ratio() const noexcept { return ratio_; }
  const Chart& chart() const noexcept { return ratio_.chart(); }
  const std::string& closed_form() const noexcept { return closed_form_; }
  PriorKind kind() const noexcept { return kind_; }

  // log pi(theta) up to an additive constant; NonPositiveRatio when f <= 0.
  double log_density(const Point& theta) const;
  double log_volume_element(const Point& theta) const { return log_pi_p_(theta); }

  PriorSpec renamed(std::string name) const;

 private:
  std::string name_;
  ScalarField ratio_;
  LogDensity log_pi_p_;
  std::string closed_form_;
  PriorKind kind_;
};

// Coefficient of variation of pi_a / pi_b over the probes; priors compare
// equal when it is <= rel_tol.
double ratio_coefficient_of_variation(const PriorSpec& a, const PriorSpec& b, const std::vector<Point>& probes);
bool equal_up_to_constant(const PriorSpec& a, const PriorSpec& b, const std::vector<Point>& probes,
                          double rel_tol = 1e-10);

// pi_P for a pair: ratio 1, density |g| |g~|^(-1/2).
PriorSpec volume_element_prior(const ModelPair& pair);
// pi_P built directly from a predictive metric: density |g°|^(1/2).
PriorSpec volume_element_prior(const MetricField& predictive_metric);
// Jeffreys prior |g|^(1/2) of the x-model.
PriorSpec jeffreys_prior(const ModelPair& pair);

struct CkappaParams {
  double c = 0.0;
  double kappa = 1.0;
};

// Location-scale pairs only (SpecError otherwise).
PriorSpec prior_right_invariant(const ModelPair& pair);
PriorSpec prior_ckappa(const ModelPair& pair, const CkappaParams& params);
PriorSpec prior_cauchy(const ModelPair& pair);

// cosh of the hyperbolic distance between (mu, sigma) and (0, kappa).
double cosh_rho(const LocationScaleConstants& c, double kappa, double mu, double sigma);

// Poisson pairs only: ratio (sum lambda_i / s_i)^-(d/2 - 1).
PriorSpec prior_stein_poisson(const ModelPair& pair);

// Ratio f^c, c in (0, 1] (RangeError otherwise).
PriorSpec power_prior(const PriorSpec& prior, double c);

// Ratio supplied directly (e.g. the prior sigma^2 / pi_P-style test fields).
PriorSpec prior_from_ratio(const ModelPair& pair, std::string name, ScalarField ratio);

// f = 1 + eps * sum_m a_m exp(-|theta - c_m|^2_w / 2) with sum |a_m| <= 1 and
// centres drawn inside [lo, hi]; analytic gradient and Hessian.
struct BumpPriorOptions {
  int bumps = 3;
  double eps = 0.5;
  // Bump widths relative to the box extent.
  double min_width = 0.3;
  double max_width = 1.0;
};
PriorSpec random_bump_prior(const ModelPair& pair, const Vector& lo, const Vector& hi, std::uint64_t seed,
                            const BumpPriorOptions& opts = {});

// ---------------------------------------------------------------------------
// Probes and superharmonicity.

// Halton points in [lo, hi] (log-uniform on positive coordinates) appended to
// any explicit points. Explicit points must be admitted by the chart.
std::vector<Point> make_probes(const Chart& chart, const Vector& lo, const Vector& hi, int count,
                               const std::vector<Point>& explicit_points = {});

enum class SuperharmonicVerdict { Superharmonic, StrictSomewhere, Violated };

std::string_view to_string(SuperharmonicVerdict v) noexcept;

struct SuperharmonicOptions {
  // Per-probe tolerance is rel_tol times the sum of absolute values of the
  // terms of the Laplacian at that probe, unless abs_tol is set.
  double rel_tol = 1e-7;
  std::optional<double> abs_tol;
  FdOptions fd;
};

struct SuperharmonicReport {
  std::vector<double> laplacian;  // per probe
  std::vector<double> tolerance;  // per probe
  double max_laplacian = 0.0;
  Point argmax;
  double min_laplacian = 0.0;
  Point argmin;
  SuperharmonicVerdict verdict = SuperharmonicVerdict::Superharmonic;
};

// Numerical at the probes only.
SuperharmonicReport superharmonic_check(const ScalarField& f, const MetricField& m, const std::vector<Point>& probes,
                                        const SuperharmonicOptions& opts = {});

}  // namespace predmetric
