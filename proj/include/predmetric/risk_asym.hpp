#pragma once

// N^2-scaled asymptotic Kullback-Leibler risk differences between Bayesian
// predictive densities, by the u_pi route and by the predictive-metric
// Laplacian route, plus closed forms for the builtin examples.

#include "predmetric/models.hpp"
#include "predmetric/priors.hpp"

namespace predmetric {

struct RiskOptions {
  FdOptions fd;
  // Tensors estimated by Monte Carlo with fewer draws than this are refused.
  std::size_t mc_sample_floor = 100000;
  // Relative mismatch between the two Laplacian forms that counts as an internal error.
  double form_mismatch_tol = 1e-6;
};

// u^i = g^ik (d_k log pi - Gamma^e_kj^j) + r^i, split into its parts.
struct UPiVector {
  Vector u;
  Vector gradient_part;  // g^ik d_k log pi
  Vector e_trace_part;   // -g^ik Gamma^e_kj^j
  Vector s;              // g^ik (Gamma°_kj^j - Gamma^e_kj^j), Gamma° from the predictive metric
  Vector r;              // g^kl (Gamma~^m_kl^i - Gamma^m_kl^i)
};

// d_k log pi_P from the duality identity on analytic/numeric tensors.
Vector log_volume_element_gradient(const ModelPair& pair, const Point& theta);

UPiVector u_pi(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts = {});
// Same with coefficient 1/2 on r; u = w + r/2 is asserted.
UPiVector w_pi(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts = {});

// 1/2 g~_ij u^i u^j + g~_ij g^jk (d_k u^i + Gamma~^e_kl^i u^l) for one prior.
double theorem1_term(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts = {});
double risk_diff_thm1(const ModelPair& pair, const PriorSpec& prior, const PriorSpec& baseline, const Point& theta,
                      const RiskOptions& opts = {});

// Both forms of the Laplacian route for f = pi / pi_P.
struct Theorem2Forms {
  double laplacian_of_f;      // Delta f / f - 1/2 g°^ij d_i f d_j f / f^2
  double laplacian_of_sqrt;  // 2 Delta sqrt(f) / sqrt(f)
};
Theorem2Forms theorem2_forms(const MetricField& predictive, const ScalarField& ratio, const Point& theta,
                             const FdOptions& fd = {});
double risk_diff_thm2(const MetricField& predictive, const ScalarField& ratio, const Point& theta,
                      const RiskOptions& opts = {});
double risk_diff_thm2(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts = {});

// g = g~ setting: 2 Delta_g sqrt(pi/pi_J) / sqrt(pi/pi_J); SpecError when the
// two models differ at theta.
double conventional_risk_diff(const ModelPair& pair, const PriorSpec& prior, const Point& theta,
                              const RiskOptions& opts = {});

// (1/2N) sum g~_ij g^ij.
double leading_risk_term(const ModelPair& pair, const Point& theta, double n);

// Closed forms.
double riskr_closed_form(const LocationScaleConstants& c);
double riskhs_closed_form(double curvature, double c, double cosh_rho);
double riskhs_closed_form(const LocationScaleConstants& consts, const CkappaParams& p, const Point& theta);
double poisson_stein_risk(const Vector& s, const Point& lambda);

}  // namespace predmetric
