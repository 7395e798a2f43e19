#pragma once

// Parametric model pairs p(x | theta), p~(y | theta) over one parameter space,
// with Fisher metrics, skewness tensors and e/m connection coefficients.
//
// Index conventions: Tensor3 entries are all-lower (i, j, k) with
//   T_ijk       = E[d_i l d_j l d_k l]
//   Gamma^e_ijk = E[d_i d_j l d_k l]
//   Gamma^m_ijk = Gamma^e_ijk + T_ijk
// so that d_i g_jk = Gamma^e_ijk + Gamma^m_ikj.

#include "predmetric/geometry.hpp"
#include "predmetric/quadrature.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace predmetric {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// One-dimensional base densities for location-scale families.

class BaseDensity {
 public:
  virtual ~BaseDensity() = default;

  virtual std::string name() const = 0;
  virtual double log_pdf(double z) const = 0;
  // psi(z) = d log phi / dz and its derivative.
  virtual double score(double z) const = 0;
  virtual double score_derivative(double z) const = 0;
  virtual double sample(Rng& rng) const = 0;
  // Nodes and weights with sum_i w_i h(z_i) ~= E_phi[h(Z)].
  virtual quadrature::Rule expectation_rule(int n) const;
  virtual bool is_standard_normal() const { return false; }
  // Extra shape parameter (Student-t degrees of freedom); 0 when unused.
  virtual double shape() const { return 0.0; }
};

std::shared_ptr<const BaseDensity> make_standard_normal();
std::shared_ptr<const BaseDensity> make_logistic();
std::shared_ptr<const BaseDensity> make_student_t(double nu);
// "normal", "logistic" or "student_t" (needs nu).
std::shared_ptr<const BaseDensity> make_base_density(const std::string& name, double nu = 0.0);

// ---------------------------------------------------------------------------
// Expectation backends.

enum class TensorMode { Analytic, Quadrature, MonteCarlo };

std::string_view to_string(TensorMode mode) noexcept;

struct ExpectationScheme {
  TensorMode mode = TensorMode::Quadrature;
  int quadrature_nodes = 128;
  // Discrete families: truncate each coordinate once the remaining mass is below this.
  double series_tail_mass = 1e-12;
  std::size_t mc_samples = 200000;
  std::uint64_t mc_seed = 0x5eed;
};

// Weighted observation nodes approximating expectations under p(. | theta).
struct ObservationRule {
  int obs_dim = 0;
  std::vector<double> nodes;  // row-major, size() x obs_dim
  std::vector<double> weights;

  std::size_t size() const noexcept { return weights.size(); }
  std::span<const double> node(std::size_t i) const {
    return {nodes.data() + i * static_cast<std::size_t>(obs_dim), static_cast<std::size_t>(obs_dim)};
  }
};

// N observations of dimension obs_dim, row-major.
struct Dataset {
  int obs_dim = 1;
  std::vector<double> values;

  std::size_t size() const noexcept { return obs_dim > 0 ? values.size() / static_cast<std::size_t>(obs_dim) : 0; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * static_cast<std::size_t>(obs_dim), static_cast<std::size_t>(obs_dim)};
  }
};

// theta -> sum_n log p(x_n | theta) for one dataset, with sufficient
// statistics computed once.
class PreparedLikelihood {
 public:
  virtual ~PreparedLikelihood() = default;
  virtual double eval(const Point& theta) const = 0;
};

// log p(y | theta_m) for a fixed set of parameter nodes, prepared once.
class NodeDensity {
 public:
  virtual ~NodeDensity() = default;
  virtual void eval(std::span<const double> y, std::span<double> out) const = 0;
};

class ParametricModel {
 public:
  explicit ParametricModel(Chart chart) : chart_(std::move(chart)) {}
  virtual ~ParametricModel() = default;

  const Chart& chart() const noexcept { return chart_; }
  int dim() const noexcept { return chart_.dim(); }

  virtual int obs_dim() const = 0;
  virtual std::string label() const = 0;
  virtual double log_density(std::span<const double> obs, const Point& theta) const = 0;
  virtual void sample(const Point& theta, Rng& rng, std::span<double> out) const = 0;

  // d/dtheta log p and its Hessian; finite differences unless overridden.
  virtual Vector score(std::span<const double> obs, const Point& theta) const;
  virtual Matrix score_hessian(std::span<const double> obs, const Point& theta) const;

  // Default: Monte Carlo with scheme.mc_samples draws from a stream seeded by
  // scheme.mc_seed (identical draws at every theta).
  virtual ObservationRule observation_rule(const Point& theta, const ExpectationScheme& scheme) const;

  virtual std::unique_ptr<PreparedLikelihood> prepare_likelihood(const Dataset& data) const;
  double log_likelihood(const Dataset& data, const Point& theta) const { return prepare_likelihood(data)->eval(theta); }
  virtual Dataset sample_dataset(const Point& theta, std::size_t n, Rng& rng) const;
  virtual std::unique_ptr<NodeDensity> prepare_nodes(std::span<const Point> thetas) const;

 private:
  Chart chart_;
};

struct TensorSet {
  Matrix metric;
  Tensor3 skewness;
  Tensor3 gamma_e;
  Tensor3 gamma_m;
};

class TensorProvider {
 public:
  virtual ~TensorProvider() = default;
  virtual TensorMode mode() const = 0;
  virtual TensorSet tensors(const Point& theta) const = 0;
  virtual Matrix metric(const Point& theta) const { return tensors(theta).metric; }
  // Number of Monte Carlo draws behind each expectation (0 when not MC).
  virtual std::size_t sample_count() const { return 0; }
};

// Closed-form tensors supplied as functions.
class AnalyticTensorProvider final : public TensorProvider {
 public:
  using TensorFn = std::function<TensorSet(const Point&)>;
  using MetricFn = std::function<Matrix(const Point&)>;
  AnalyticTensorProvider(TensorFn tensors, MetricFn metric) : tensors_(std::move(tensors)), metric_(std::move(metric)) {}
  TensorMode mode() const override { return TensorMode::Analytic; }
  TensorSet tensors(const Point& theta) const override { return tensors_(theta); }
  Matrix metric(const Point& theta) const override { return metric_(theta); }

 private:
  TensorFn tensors_;
  MetricFn metric_;
};

// Expectations computed from a model's observation rule.
class NumericTensorProvider final : public TensorProvider {
 public:
  NumericTensorProvider(std::shared_ptr<const ParametricModel> model, ExpectationScheme scheme);
  TensorMode mode() const override { return scheme_.mode; }
  TensorSet tensors(const Point& theta) const override;
  Matrix metric(const Point& theta) const override;
  std::size_t sample_count() const override {
    return scheme_.mode == TensorMode::MonteCarlo ? scheme_.mc_samples : 0;
  }

 private:
  std::shared_ptr<const ParametricModel> model_;
  ExpectationScheme scheme_;
};

// Multiplies the metric by (1 + eps) while leaving the connections alone.
// Negative-control fixture: the duality identity must fail for it.
std::shared_ptr<const TensorProvider> perturb_metric(std::shared_ptr<const TensorProvider> base, double eps);

// E[d_i l d_j l] from the model's observation rule.
Matrix fisher_metric_numeric(const ParametricModel& model, const ExpectationScheme& scheme, const Point& theta);

// (T, Gamma^e, Gamma^m) plus the metric from a provider.
TensorSet t_tensor_and_connections(const TensorProvider& provider, const Point& theta);

// d_i g_jk = Gamma^e_ijk + Gamma^m_ikj, returned as dg[i](j, k).
std::vector<Matrix> metric_derivatives_from_duality(const TensorSet& t);

// ---------------------------------------------------------------------------
// Builtin pair specifications.

struct NormalPairSpec {
  Matrix sigma;        // covariance of x
  Matrix sigma_tilde;  // covariance of y
};

struct LocationScalePairSpec {
  std::shared_ptr<const BaseDensity> phi;
  std::shared_ptr<const BaseDensity> phi_tilde;
  int quadrature_nodes = 128;
};

// Fisher constants and unit-scale tensors of a location-scale family:
// at (mu, sigma) every metric entry scales as 1/sigma^2, every third-order
// tensor entry as 1/sigma^3.
struct LocationScaleConstants {
  double a = 0.0, b = 0.0;              // x-model
  double a_tilde = 0.0, b_tilde = 0.0;  // y-model
  TensorSet x_unit;
  TensorSet y_unit;

  // a^2 b~ / (b^2 a~): the location weight in the hyperbolic distance.
  double location_weight() const { return a * a * b_tilde / (b * b * a_tilde); }
  // u = k mu for the upper-half-plane chart.
  double upper_half_plane_scale() const { return std::sqrt(b_tilde / a_tilde) * a / b; }
  // Curvature magnitude b~ / b^2.
  double curvature() const { return b_tilde / (b * b); }
};

// Tensors of one location-scale family at (0, 1) by quadrature over phi.
TensorSet location_scale_unit_tensors(const BaseDensity& phi, int quadrature_nodes);

struct PoissonPairSpec {
  Vector s;  // exposure multipliers, y_i ~ Po(s_i lambda_i)
};

enum class Family { Normal, LocationScale, Poisson, Custom };

std::string_view to_string(Family family) noexcept;

struct ModelSide {
  std::shared_ptr<const ParametricModel> model;
  std::shared_ptr<const TensorProvider> tensors;
};

class ModelPair {
 public:
  using FamilyInfo = std::variant<std::monostate, NormalPairSpec, LocationScaleConstants, PoissonPairSpec>;

  ModelPair(Family family, Chart chart, ModelSide x, ModelSide y, FamilyInfo info = {},
            std::vector<Chart> extra_charts = {});

  // Pair with user-supplied models; tensors default to numeric expectations.
  static ModelPair custom(Chart chart, std::shared_ptr<const ParametricModel> x_model,
                          std::shared_ptr<const ParametricModel> y_model, ExpectationScheme scheme = {});

  Family family() const noexcept { return family_; }
  int dim() const noexcept { return chart_.dim(); }
  const Chart& chart() const noexcept { return chart_; }
  // Reference chart plus any family-specific alternates (by name).
  const Chart& chart_named(const std::string& name) const;
  std::vector<std::string> chart_names() const;

  const ParametricModel& x_model() const { return *x_.model; }
  const ParametricModel& y_model() const { return *y_.model; }
  std::shared_ptr<const ParametricModel> x_model_ptr() const { return x_.model; }
  std::shared_ptr<const ParametricModel> y_model_ptr() const { return y_.model; }
  const TensorProvider& x_tensors() const { return *x_.tensors; }
  std::shared_ptr<const TensorProvider> x_tensors_ptr() const { return x_.tensors; }
  const TensorProvider& y_tensors() const { return *y_.tensors; }

  const NormalPairSpec* normal_spec() const { return std::get_if<NormalPairSpec>(&info_); }
  const LocationScaleConstants* location_scale() const { return std::get_if<LocationScaleConstants>(&info_); }
  const PoissonPairSpec* poisson_spec() const { return std::get_if<PoissonPairSpec>(&info_); }

  // Fisher metric of x (g), of y (g~) and the predictive metric g g~^-1 g.
  MetricField data_metric() const;
  MetricField target_metric() const;
  MetricField predictive_metric() const;
  Matrix predictive_metric_at(const Point& theta) const;

  // Same pair with the x-model tensors replaced (negative-control fixtures).
  ModelPair with_x_tensors(std::shared_ptr<const TensorProvider> tensors) const;

 private:
  Family family_;
  Chart chart_;
  ModelSide x_;
  ModelSide y_;
  FamilyInfo info_;
  std::vector<Chart> extra_charts_;
};

ModelPair builtin_normal(const NormalPairSpec& spec);
ModelPair builtin_location_scale(const LocationScalePairSpec& spec);
ModelPair builtin_poisson(const PoissonPairSpec& spec);

// Location-scale pair with numeric tensors (no analytic scaling) from the
// same base densities; used to cross-check the builtin.
ModelPair numeric_location_scale(const LocationScalePairSpec& spec, ExpectationScheme scheme = {});

// Builtin charts.
Chart upper_half_plane_chart(double location_scale);  // (u, v) = (k mu, sigma)
Chart poisson_xi_chart(const Vector& s);              // xi_i = 2 sqrt(lambda_i / s_i)

}  // namespace predmetric
