#pragma once

// Bayesian predictive densities p^(y | x^N) = ∫ p~(y|θ) p(x^N|θ) π(θ) dθ / ∫ p(x^N|θ) π(θ) dθ:
// normal and Poisson closed forms and a posterior-grid evaluator for d <= 2.

#include "predmetric/models.hpp"
#include "predmetric/priors.hpp"

#include <optional>

namespace predmetric {

struct GaussianForm {
  Vector mean;
  Matrix cov;
};

class PredictiveDensity {
 public:
  enum class Method { ClosedForm, Quadrature };
  using LogEval = std::function<double(std::span<const double>)>;

  PredictiveDensity(Method method, int obs_dim, LogEval log_eval, std::string normalization,
                    std::optional<GaussianForm> gaussian = {});

  double log_density(std::span<const double> y) const;
  double density(std::span<const double> y) const { return std::exp(log_density(y)); }
  // out[j] = log p^(y_j) for row-major y (n x obs_dim).
  void log_density_batch(std::span<const double> ys, std::span<double> out) const;

  Method method() const noexcept { return method_; }
  int obs_dim() const noexcept { return obs_dim_; }
  const std::string& normalization() const noexcept { return normalization_; }
  const std::optional<GaussianForm>& gaussian() const noexcept { return gaussian_; }

  // Replaces the batch path (vectorised evaluators).
  PredictiveDensity with_batch(std::function<void(std::span<const double>, std::span<double>)> batch) const;

 private:
  Method method_;
  int obs_dim_;
  LogEval log_eval_;
  std::function<void(std::span<const double>, std::span<double>)> batch_;
  std::string normalization_;
  std::optional<GaussianForm> gaussian_;
};

std::string_view to_string(PredictiveDensity::Method m) noexcept;

// N(xbar, Σ~ + Σ/N).
PredictiveDensity normal_predictive_uniform(const NormalPairSpec& spec, std::size_t n, const Vector& xbar);
// 1/2 log det(I + Σ~^-1 Σ / N): exact expected KL risk of the above.
double normal_uniform_exact_risk(const NormalPairSpec& spec, std::size_t n);

// Closed forms from the per-coordinate totals X_i = sum_n x_ni of N observations.
PredictiveDensity poisson_predictive_P(const PoissonPairSpec& spec, const Vector& totals, std::size_t n = 1);
// With `y_max`, counts 0 <= y <= y_max share one precomputed u-grid (each
// value is checked against the half-resolution grid and recomputed
// adaptively when the two disagree).
PredictiveDensity poisson_predictive_S(const PoissonPairSpec& spec, const Vector& totals, std::size_t n = 1,
                                       const std::optional<Vector>& y_max = {});

// log of ∫_0^∞ u^(d/2-2) prod_i (N + t_i + u/s_i)^-(c_i) du, with t_i = 0 for the
// denominator and t_i = s_i for the numerator of the π_S predictive.
struct SteinIntegralOptions {
  double rel_tol = 1e-12;
  int max_halvings = 12;
};
double poisson_stein_log_integral(const Vector& s, const Vector& shift, const Vector& exponents, double n,
                                  const SteinIntegralOptions& opts = {});

// Same integral after u = t/(1-t), by adaptive Gauss-Kronrod (cross-check route).
double poisson_stein_log_integral_kronrod(const Vector& s, const Vector& shift, const Vector& exponents, double n);

// ---------------------------------------------------------------------------
// Posterior grid.

struct GridOptions {
  int nodes = 64;            // per axis
  double window_sds = 8.0;   // half-width in Laplace standard deviations
  double shell_tol = 1e-10;  // allowed posterior mass in the outer eighth of the window
  double max_window_sds = 64.0;
  bool refine = true;        // double nodes until log-evidence changes < refine_tol
  double refine_tol = 1e-8;
  int max_nodes = 1024;      // per axis, d = 1; squared-root of this for d = 2
  std::optional<Point> start;  // mode search start (reference chart)
  // Fixed per-side edges (d x 2, Laplace sd: lower then upper); skips window growth.
  std::optional<Matrix> edges;
};

// Tensor-product Gauss-Legendre grid in log-transformed coordinates around the
// posterior mode, shared by every prior evaluated on the same dataset.
class PosteriorGrid {
 public:
  static PosteriorGrid build(const ModelPair& pair, const Dataset& data, const PriorSpec& centring,
                             const GridOptions& opts = {});

  std::size_t size() const noexcept { return thetas_.size(); }
  const std::vector<Point>& thetas() const noexcept { return thetas_; }
  int nodes_per_axis() const noexcept { return nodes_; }
  // Widest side of the window and the per-side edges, in Laplace sd.
  double window_sds() const noexcept { return window_; }
  const Matrix& edges() const noexcept { return edges_; }

  // Normalised log posterior weights for one prior (WindowError if its
  // posterior leaks out of the window).
  std::vector<double> log_posterior_weights(const PriorSpec& prior) const;
  double log_evidence(const PriorSpec& prior) const;
  double shell_fraction(const PriorSpec& prior) const;

  // log p^(y) given normalised log weights.
  double log_predictive(std::span<const double> log_weights, std::span<const double> y) const;
  PredictiveDensity predictive(const PriorSpec& prior) const;

 private:
  PosteriorGrid() = default;
  std::vector<double> log_joint(const PriorSpec& prior) const;

  std::shared_ptr<const ModelPair> pair_;
  std::vector<Point> thetas_;
  std::vector<double> log_base_;  // log quadrature weight + log Jacobian + log likelihood
  std::vector<unsigned char> shell_;  // bit 2k / 2k+1: lower / upper outer eighth of axis k
  Matrix edges_;
  std::shared_ptr<const NodeDensity> target_;
  int nodes_ = 0;
  double window_ = 0.0;
  double shell_tol_ = 0.0;
};

// Posterior mode in log-transformed coordinates of log p(x|θ) + log π(θ) + log|dθ/dη|.
Point posterior_mode(const ModelPair& pair, const Dataset& data, const PriorSpec& prior,
                     const std::optional<Point>& start = {});

double quadrature_predictive(const ModelPair& pair, const PriorSpec& prior, const Dataset& data,
                             std::span<const double> y, const GridOptions& opts = {});

}  // namespace predmetric
