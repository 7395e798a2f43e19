#include "predmetric/risk_asym.hpp"

#include <cmath>

namespace predmetric {

namespace {

void require_tensor_quality(const TensorProvider& p, const RiskOptions& opts) {
  if (p.mode() == TensorMode::MonteCarlo && p.sample_count() < opts.mc_sample_floor)
    fail(ErrorKind::Spec, "Monte Carlo tensors with " + std::to_string(p.sample_count()) +
                              " draws are below the configured floor of " + std::to_string(opts.mc_sample_floor));
}

Vector trace_of_raised(const Tensor3& lower, const Matrix& inverse) { return connection_trace(raise_last(lower, inverse)); }

Vector log_det_gradient(const TensorSet& t, const Matrix& inverse) {
  const std::vector<Matrix> dg = metric_derivatives_from_duality(t);
  Vector out(static_cast<Eigen::Index>(dg.size()));
  for (std::size_t k = 0; k < dg.size(); ++k) out[static_cast<Eigen::Index>(k)] = (inverse * dg[k]).trace();
  return out;
}

UPiVector u_like(const ModelPair& pair, const PriorSpec& prior, const Point& theta, double gap_coefficient,
                 const RiskOptions& opts, bool with_s) {
  require_tensor_quality(pair.x_tensors(), opts);
  require_tensor_quality(pair.y_tensors(), opts);
  pair.chart().require(theta);
  const TensorSet tx = pair.x_tensors().tensors(theta);
  const TensorSet ty = pair.y_tensors().tensors(theta);
  const MetricAt gx = check_spd(tx.metric);
  const MetricAt gy = check_spd(ty.metric);
  const int d = pair.dim();

  const Jet f = prior.ratio().jet(theta, opts.fd);
  if (!(f.value > 0.0)) fail(ErrorKind::NonPositiveRatio, "prior '" + prior.name() + "' ratio is not positive");
  const Vector dlog_pi_p = log_det_gradient(tx, gx.inverse) - 0.5 * log_det_gradient(ty, gy.inverse);
  const Vector dlog_pi = f.gradient / f.value + dlog_pi_p;

  const Vector e_trace = trace_of_raised(tx.gamma_e, gx.inverse);
  const Tensor3 mx = raise_last(tx.gamma_m, gx.inverse);
  const Tensor3 my = raise_last(ty.gamma_m, gy.inverse);
  Vector r = Vector::Zero(d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) r[i] += gx.inverse(k, l) * (my(k, l, i) - mx(k, l, i));

  UPiVector out;
  out.gradient_part = gx.inverse * dlog_pi;
  out.e_trace_part = -gx.inverse * e_trace;
  out.r = r;
  out.u = out.gradient_part + out.e_trace_part + gap_coefficient * r;
  if (with_s) {
    const MetricField predictive = pair.predictive_metric();
    const MetricAt gp = check_spd(predictive(theta));
    const Vector p_trace = trace_of_raised(riemannian_connection(predictive, theta, opts.fd), gp.inverse);
    out.s = gx.inverse * (p_trace - e_trace);
  }
  return out;
}

}  // namespace

Vector log_volume_element_gradient(const ModelPair& pair, const Point& theta) {
  const TensorSet tx = pair.x_tensors().tensors(theta);
  const TensorSet ty = pair.y_tensors().tensors(theta);
  return log_det_gradient(tx, check_spd(tx.metric).inverse) - 0.5 * log_det_gradient(ty, check_spd(ty.metric).inverse);
}

UPiVector u_pi(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts) {
  return u_like(pair, prior, theta, 1.0, opts, true);
}

UPiVector w_pi(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts) {
  UPiVector w = u_like(pair, prior, theta, 0.5, opts, true);
  const Vector u = w.gradient_part + w.e_trace_part + w.r;
  const double scale = 1.0 + u.cwiseAbs().maxCoeff();
  if ((u - (w.u + 0.5 * w.r)).cwiseAbs().maxCoeff() > 1e-12 * scale)
    fail(ErrorKind::Internal, "u = w + r/2 violated");
  return w;
}

double theorem1_term(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts) {
  const int d = pair.dim();
  auto u_at = [&](const Point& p) { return u_like(pair, prior, p, 1.0, opts, false).u; };
  const Vector u = u_at(theta);
  const Matrix du = fd_jacobian(u_at, theta, pair.chart(), opts.fd);  // du(i, k) = d_k u^i

  const TensorSet tx = pair.x_tensors().tensors(theta);
  const TensorSet ty = pair.y_tensors().tensors(theta);
  const Matrix ginv = check_spd(tx.metric).inverse;
  const Matrix& gt = ty.metric;
  const Tensor3 et = raise_last(ty.gamma_e, check_spd(gt).inverse);

  double value = 0.5 * u.dot(gt * u);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      double cov = du(i, k);
      for (int l = 0; l < d; ++l) cov += et(k, l, i) * u[l];
      double weight = 0.0;
      for (int j = 0; j < d; ++j) weight += gt(i, j) * ginv(j, k);
      value += weight * cov;
    }
  return value;
}

double risk_diff_thm1(const ModelPair& pair, const PriorSpec& prior, const PriorSpec& baseline, const Point& theta,
                      const RiskOptions& opts) {
  return theorem1_term(pair, prior, theta, opts) - theorem1_term(pair, baseline, theta, opts);
}

Theorem2Forms theorem2_forms(const MetricField& predictive, const ScalarField& ratio, const Point& theta,
                             const FdOptions& fd) {
  const MetricAt at = metric_inverse_and_det(predictive, theta);
  const Tensor3 gamma = riemannian_connection(predictive, theta, fd);
  const Jet f = ratio.jet(theta, fd);
  if (!(f.value > 0.0) || !std::isfinite(f.value))
    fail(ErrorKind::NonPositiveRatio, "prior ratio is not positive at the evaluation point");
  const Jet root = ratio.sqrt().jet(theta, fd);
  Theorem2Forms out;
  out.laplacian_of_f = laplace_beltrami(at.inverse, gamma, f) / f.value -
                       0.5 * f.gradient.dot(at.inverse * f.gradient) / (f.value * f.value);
  out.laplacian_of_sqrt = 2.0 * laplace_beltrami(at.inverse, gamma, root) / root.value;
  return out;
}

double risk_diff_thm2(const MetricField& predictive, const ScalarField& ratio, const Point& theta,
                      const RiskOptions& opts) {
  const Theorem2Forms forms = theorem2_forms(predictive, ratio, theta, opts.fd);
  const double gap = std::abs(forms.laplacian_of_f - forms.laplacian_of_sqrt);
  if (gap > opts.form_mismatch_tol * (1.0 + std::abs(forms.laplacian_of_sqrt)))
    fail(ErrorKind::Internal, "Laplacian forms of the risk difference disagree by " + std::to_string(gap));
  return forms.laplacian_of_sqrt;
}

double risk_diff_thm2(const ModelPair& pair, const PriorSpec& prior, const Point& theta, const RiskOptions& opts) {
  return risk_diff_thm2(pair.predictive_metric(), prior.ratio(), theta, opts);
}

double conventional_risk_diff(const ModelPair& pair, const PriorSpec& prior, const Point& theta,
                              const RiskOptions& opts) {
  const TensorSet tx = pair.x_tensors().tensors(theta);
  const TensorSet ty = pair.y_tensors().tensors(theta);
  const double scale = tx.metric.cwiseAbs().maxCoeff() + tx.gamma_m.max_abs();
  const double gap = (tx.metric - ty.metric).cwiseAbs().maxCoeff() +
                     (tx.gamma_m + (-1.0) * ty.gamma_m).max_abs() + (tx.gamma_e + (-1.0) * ty.gamma_e).max_abs();
  if (gap > 1e-12 * scale) fail(ErrorKind::Spec, "conventional risk difference needs identical x and y models");
  // pi_P = |g| |g|^(-1/2) is the Jeffreys prior, so pi/pi_J = pi/pi_P.
  const double conventional = risk_diff_thm2(pair.data_metric(), prior.ratio(), theta, opts);
  const double predictive = risk_diff_thm2(pair, prior, theta, opts);
  if (std::abs(conventional - predictive) > 1e-8 * (1.0 + std::abs(predictive)))
    fail(ErrorKind::Internal, "conventional and predictive-metric risk differences disagree");
  return conventional;
}

double leading_risk_term(const ModelPair& pair, const Point& theta, double n) {
  if (!(n > 0.0)) fail(ErrorKind::Range, "sample size must be positive");
  const Matrix g = pair.x_tensors().metric(theta);
  const Matrix gt = pair.y_tensors().metric(theta);
  return (gt * check_spd(g).inverse).trace() / (2.0 * n);
}

double riskr_closed_form(const LocationScaleConstants& c) { return -0.5 * c.curvature(); }

double riskhs_closed_form(double curvature, double c, double cosh_rho) {
  const double t = cosh_rho + c;
  return -curvature * (0.5 + c / t + 1.5 * (1.0 - c * c) / (t * t));
}

double riskhs_closed_form(const LocationScaleConstants& consts, const CkappaParams& p, const Point& theta) {
  return riskhs_closed_form(consts.curvature(), p.c, cosh_rho(consts, p.kappa, theta[0], theta[1]));
}

double poisson_stein_risk(const Vector& s, const Point& lambda) {
  const double d = static_cast<double>(s.size());
  const double alpha = 0.5 * d - 1.0;
  return -0.5 * alpha * alpha / lambda.cwiseQuotient(s).sum();
}

}  // namespace predmetric
