#include "predmetric/models.hpp"

#include "predmetric/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace predmetric {

std::string_view to_string(TensorMode mode) noexcept {
  switch (mode) {
    case TensorMode::Analytic: return "analytic";
    case TensorMode::Quadrature: return "quadrature";
    case TensorMode::MonteCarlo: return "monte-carlo";
  }
  return "unknown";
}

std::string_view to_string(Family family) noexcept {
  switch (family) {
    case Family::Normal: return "normal";
    case Family::LocationScale: return "location_scale";
    case Family::Poisson: return "poisson";
    case Family::Custom: return "custom";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Base densities

quadrature::Rule BaseDensity::expectation_rule(int n) const {
  constexpr double t_max = 3.5;
  const int level = std::max(3, static_cast<int>(std::ceil(std::log2(std::max(n, 8) / (2.0 * t_max)))));
  const quadrature::Rule line = quadrature::double_exponential_real_line(level, t_max);
  quadrature::Rule rule;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const double w = line.weights[i] * std::exp(log_pdf(line.nodes[i]));
    if (w > 0.0 && std::isfinite(w) && std::isfinite(line.nodes[i])) {
      rule.nodes.push_back(line.nodes[i]);
      rule.weights.push_back(w);
    }
  }
  return rule;
}

namespace {

class StandardNormal final : public BaseDensity {
 public:
  std::string name() const override { return "normal"; }
  double log_pdf(double z) const override { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }
  double score(double z) const override { return -z; }
  double score_derivative(double) const override { return -1.0; }
  double sample(Rng& rng) const override { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  quadrature::Rule expectation_rule(int n) const override { return quadrature::gauss_hermite(n); }
  bool is_standard_normal() const override { return true; }
};

class Logistic final : public BaseDensity {
 public:
  std::string name() const override { return "logistic"; }
  double log_pdf(double z) const override {
    const double a = std::abs(z);
    return -a - 2.0 * std::log1p(std::exp(-a));
  }
  double score(double z) const override { return -std::tanh(0.5 * z); }
  double score_derivative(double z) const override {
    const double c = std::cosh(0.5 * z);
    return -0.5 / (c * c);
  }
  double sample(Rng& rng) const override {
    double u = 0.0;
    do {
      u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    } while (u <= 0.0);
    return std::log(u) - std::log1p(-u);
  }
};

class StudentT final : public BaseDensity {
 public:
  explicit StudentT(double nu) : nu_(nu) {
    if (!(nu > 0.0) || !std::isfinite(nu)) fail(ErrorKind::Spec, "Student-t degrees of freedom must be positive");
    log_norm_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
  }
  std::string name() const override { return "student_t"; }
  double shape() const override { return nu_; }
  double log_pdf(double z) const override { return log_norm_ - 0.5 * (nu_ + 1.0) * std::log1p(z * z / nu_); }
  double score(double z) const override { return -(nu_ + 1.0) * z / (nu_ + z * z); }
  double score_derivative(double z) const override {
    const double q = nu_ + z * z;
    return -(nu_ + 1.0) * (nu_ - z * z) / (q * q);
  }
  double sample(Rng& rng) const override { return std::student_t_distribution<double>(nu_)(rng); }

 private:
  double nu_;
  double log_norm_ = 0.0;
};

}  // namespace

std::shared_ptr<const BaseDensity> make_standard_normal() { return std::make_shared<StandardNormal>(); }
std::shared_ptr<const BaseDensity> make_logistic() { return std::make_shared<Logistic>(); }
std::shared_ptr<const BaseDensity> make_student_t(double nu) { return std::make_shared<StudentT>(nu); }

std::shared_ptr<const BaseDensity> make_base_density(const std::string& name, double nu) {
  if (name == "normal") return make_standard_normal();
  if (name == "logistic") return make_logistic();
  if (name == "student_t") return make_student_t(nu);
  fail(ErrorKind::Spec, "unknown base density '" + name + "'");
}

// ---------------------------------------------------------------------------
// ParametricModel defaults

Vector ParametricModel::score(std::span<const double> obs, const Point& theta) const {
  return fd_gradient([&](const Point& p) { return log_density(obs, p); }, theta, chart_);
}

Matrix ParametricModel::score_hessian(std::span<const double> obs, const Point& theta) const {
  Matrix H = fd_jacobian([&](const Point& p) { return score(obs, p); }, theta, chart_);
  return 0.5 * (H + H.transpose());
}

ObservationRule ParametricModel::observation_rule(const Point& theta, const ExpectationScheme& scheme) const {
  ObservationRule rule;
  rule.obs_dim = obs_dim();
  const std::size_t m = std::max<std::size_t>(scheme.mc_samples, 1);
  rule.nodes.resize(m * static_cast<std::size_t>(obs_dim()));
  rule.weights.assign(m, 1.0 / static_cast<double>(m));
  Rng rng(scheme.mc_seed);
  for (std::size_t i = 0; i < m; ++i)
    sample(theta, rng, {rule.nodes.data() + i * static_cast<std::size_t>(obs_dim()), static_cast<std::size_t>(obs_dim())});
  return rule;
}

namespace {

class LoopLikelihood final : public PreparedLikelihood {
 public:
  LoopLikelihood(const ParametricModel& model, const Dataset& data) : model_(model), data_(data) {}
  double eval(const Point& theta) const override {
    double acc = 0.0;
    for (std::size_t n = 0; n < data_.size(); ++n) acc += model_.log_density(data_.row(n), theta);
    return acc;
  }

 private:
  const ParametricModel& model_;
  Dataset data_;
};

class LoopNodeDensity final : public NodeDensity {
 public:
  LoopNodeDensity(const ParametricModel& model, std::span<const Point> thetas)
      : model_(model), thetas_(thetas.begin(), thetas.end()) {}
  void eval(std::span<const double> y, std::span<double> out) const override {
    for (std::size_t m = 0; m < thetas_.size(); ++m) out[m] = model_.log_density(y, thetas_[m]);
  }

 private:
  const ParametricModel& model_;
  std::vector<Point> thetas_;
};

// log N(y; mean_m, scale_m^2) through the vectorised kernel.
class GaussianNodeDensity final : public NodeDensity {
 public:
  GaussianNodeDensity(std::vector<double> mean, std::vector<double> scale)
      : mean_(std::move(mean)), inv_scale_(scale.size()), offset_(scale.size()) {
    for (std::size_t m = 0; m < scale.size(); ++m) {
      inv_scale_[m] = 1.0 / scale[m];
      offset_[m] = -std::log(scale[m]) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
  }
  void eval(std::span<const double> y, std::span<double> out) const override {
    kernels::gaussian_log_kernel(y[0], mean_, inv_scale_, offset_, out);
  }

 private:
  std::vector<double> mean_, inv_scale_, offset_;
};

// log N(y; theta_m, Sigma) in whitened coordinates z = L^-1 y, one
// coordinate at a time through the same kernel.
class WhitenedNormalNodeDensity final : public NodeDensity {
 public:
  WhitenedNormalNodeDensity(const Matrix& chol, double log_norm, std::span<const Point> thetas)
      : chol_(chol), centres_(static_cast<std::size_t>(chol.rows())),
        ones_(thetas.size(), 1.0), base_(thetas.size(), log_norm) {
    for (const Point& t : thetas) {
      const Vector c = chol_.triangularView<Eigen::Lower>().solve(t);
      for (Eigen::Index i = 0; i < c.size(); ++i) centres_[static_cast<std::size_t>(i)].push_back(c[i]);
    }
  }
  void eval(std::span<const double> y, std::span<double> out) const override {
    const Vector z = chol_.triangularView<Eigen::Lower>().solve(Eigen::Map<const Vector>(y.data(), chol_.rows()));
    kernels::gaussian_log_kernel(z[0], centres_[0], ones_, base_, out);
    for (std::size_t i = 1; i < centres_.size(); ++i)
      kernels::gaussian_log_kernel(z[static_cast<Eigen::Index>(i)], centres_[i], ones_, out, out);
  }

 private:
  Matrix chol_;
  std::vector<std::vector<double>> centres_;
  std::vector<double> ones_, base_;
};

}  // namespace

std::unique_ptr<PreparedLikelihood> ParametricModel::prepare_likelihood(const Dataset& data) const {
  if (data.obs_dim != obs_dim()) fail(ErrorKind::Spec, "dataset dimension does not match the model");
  return std::make_unique<LoopLikelihood>(*this, data);
}

Dataset ParametricModel::sample_dataset(const Point& theta, std::size_t n, Rng& rng) const {
  Dataset data;
  data.obs_dim = obs_dim();
  data.values.resize(n * static_cast<std::size_t>(obs_dim()));
  for (std::size_t i = 0; i < n; ++i)
    sample(theta, rng, {data.values.data() + i * static_cast<std::size_t>(obs_dim()), static_cast<std::size_t>(obs_dim())});
  return data;
}

std::unique_ptr<NodeDensity> ParametricModel::prepare_nodes(std::span<const Point> thetas) const {
  return std::make_unique<LoopNodeDensity>(*this, thetas);
}

// ---------------------------------------------------------------------------
// Tensor providers

namespace {

TensorSet accumulate_tensors(const ParametricModel& model, const ObservationRule& rule, const Point& theta) {
  const int d = model.dim();
  TensorSet t{Matrix::Zero(d, d), Tensor3(d), Tensor3(d), Tensor3(d)};
  for (std::size_t n = 0; n < rule.size(); ++n) {
    const double w = rule.weights[n];
    const auto obs = rule.node(n);
    const Vector s = model.score(obs, theta);
    const Matrix H = model.score_hessian(obs, theta);
    t.metric.noalias() += w * (s * s.transpose());
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
          t.skewness(i, j, k) += w * s[i] * s[j] * s[k];
          t.gamma_e(i, j, k) += w * H(i, j) * s[k];
        }
  }
  t.metric = 0.5 * (t.metric + t.metric.transpose());
  t.gamma_m = t.gamma_e + t.skewness;
  return t;
}

ExpectationScheme effective(ExpectationScheme scheme) {
  if (scheme.mode == TensorMode::Analytic) scheme.mode = TensorMode::Quadrature;
  return scheme;
}

}  // namespace

NumericTensorProvider::NumericTensorProvider(std::shared_ptr<const ParametricModel> model, ExpectationScheme scheme)
    : model_(std::move(model)), scheme_(effective(scheme)) {}

TensorSet NumericTensorProvider::tensors(const Point& theta) const {
  model_->chart().require(theta);
  return accumulate_tensors(*model_, model_->observation_rule(theta, scheme_), theta);
}

Matrix NumericTensorProvider::metric(const Point& theta) const { return fisher_metric_numeric(*model_, scheme_, theta); }

Matrix fisher_metric_numeric(const ParametricModel& model, const ExpectationScheme& scheme, const Point& theta) {
  model.chart().require(theta);
  const ObservationRule rule = model.observation_rule(theta, effective(scheme));
  const int d = model.dim();
  Matrix g = Matrix::Zero(d, d);
  for (std::size_t n = 0; n < rule.size(); ++n) {
    const Vector s = model.score(rule.node(n), theta);
    g.noalias() += rule.weights[n] * (s * s.transpose());
  }
  return 0.5 * (g + g.transpose());
}

TensorSet t_tensor_and_connections(const TensorProvider& provider, const Point& theta) {
  return provider.tensors(theta);
}

std::vector<Matrix> metric_derivatives_from_duality(const TensorSet& t) {
  const int d = static_cast<int>(t.metric.rows());
  std::vector<Matrix> dg(static_cast<std::size_t>(d), Matrix::Zero(d, d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) dg[static_cast<std::size_t>(i)](j, k) = t.gamma_e(i, j, k) + t.gamma_m(i, k, j);
  return dg;
}

namespace {

class PerturbedMetricProvider final : public TensorProvider {
 public:
  PerturbedMetricProvider(std::shared_ptr<const TensorProvider> base, double eps) : base_(std::move(base)), eps_(eps) {}
  TensorMode mode() const override { return base_->mode(); }
  TensorSet tensors(const Point& theta) const override {
    TensorSet t = base_->tensors(theta);
    t.metric *= 1.0 + eps_;
    return t;
  }
  Matrix metric(const Point& theta) const override { return (1.0 + eps_) * base_->metric(theta); }
  std::size_t sample_count() const override { return base_->sample_count(); }

 private:
  std::shared_ptr<const TensorProvider> base_;
  double eps_;
};

}  // namespace

std::shared_ptr<const TensorProvider> perturb_metric(std::shared_ptr<const TensorProvider> base, double eps) {
  return std::make_shared<PerturbedMetricProvider>(std::move(base), eps);
}

// ---------------------------------------------------------------------------
// Builtin models

namespace {

class NormalModel final : public ParametricModel {
 public:
  NormalModel(Chart chart, Matrix cov, std::string label)
      : ParametricModel(std::move(chart)), cov_(std::move(cov)), label_(std::move(label)) {
    const MetricAt at = check_spd(cov_);
    precision_ = at.inverse;
    chol_ = Eigen::LLT<Matrix>(cov_).matrixL();
    log_norm_ = -0.5 * (static_cast<double>(cov_.rows()) * std::log(2.0 * std::numbers::pi) + std::log(at.det));
  }
  int obs_dim() const override { return static_cast<int>(cov_.rows()); }
  std::string label() const override { return label_; }
  double log_density(std::span<const double> obs, const Point& theta) const override {
    const Vector r = Eigen::Map<const Vector>(obs.data(), obs_dim()) - theta;
    return log_norm_ - 0.5 * r.dot(precision_ * r);
  }
  Vector score(std::span<const double> obs, const Point& theta) const override {
    return precision_ * (Eigen::Map<const Vector>(obs.data(), obs_dim()) - theta);
  }
  Matrix score_hessian(std::span<const double>, const Point&) const override { return -precision_; }
  void sample(const Point& theta, Rng& rng, std::span<double> out) const override {
    std::normal_distribution<double> z(0.0, 1.0);
    Vector e(obs_dim());
    for (int i = 0; i < obs_dim(); ++i) e[i] = z(rng);
    Eigen::Map<Vector>(out.data(), obs_dim()) = theta + chol_ * e;
  }
  ObservationRule observation_rule(const Point& theta, const ExpectationScheme& scheme) const override {
    if (scheme.mode == TensorMode::MonteCarlo) return ParametricModel::observation_rule(theta, scheme);
    const int d = obs_dim();
    const int per_dim = d == 1 ? scheme.quadrature_nodes : std::min(scheme.quadrature_nodes, 12);
    const quadrature::Rule gh = quadrature::gauss_hermite(per_dim);
    ObservationRule rule;
    rule.obs_dim = d;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Vector z(d);
    for (;;) {
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        z[i] = gh.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        w *= gh.weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      }
      const Vector x = theta + chol_ * z;
      rule.nodes.insert(rule.nodes.end(), x.data(), x.data() + d);
      rule.weights.push_back(w);
      int i = 0;
      for (; i < d; ++i) {
        if (++idx[static_cast<std::size_t>(i)] < per_dim) break;
        idx[static_cast<std::size_t>(i)] = 0;
      }
      if (i == d) break;
    }
    return rule;
  }
  std::unique_ptr<PreparedLikelihood> prepare_likelihood(const Dataset& data) const override {
    if (data.obs_dim != obs_dim()) fail(ErrorKind::Spec, "dataset dimension does not match the model");
    return std::make_unique<Likelihood>(*this, data);
  }
  std::unique_ptr<NodeDensity> prepare_nodes(std::span<const Point> thetas) const override {
    if (obs_dim() != 1) return std::make_unique<WhitenedNormalNodeDensity>(chol_, log_norm_, thetas);
    std::vector<double> mean, scale;
    for (const Point& t : thetas) {
      mean.push_back(t[0]);
      scale.push_back(chol_(0, 0));
    }
    return std::make_unique<GaussianNodeDensity>(std::move(mean), std::move(scale));
  }
  const Matrix& precision() const { return precision_; }

 private:
  // sum_n (x_n - theta)' P (x_n - theta) = tr(P S) + N (xbar - theta)' P (xbar - theta).
  class Likelihood final : public PreparedLikelihood {
   public:
    Likelihood(const NormalModel& model, const Dataset& data) : precision_(model.precision_) {
      const int d = model.obs_dim();
      n_ = static_cast<double>(data.size());
      mean_ = Vector::Zero(d);
      for (std::size_t i = 0; i < data.size(); ++i) mean_ += Eigen::Map<const Vector>(data.row(i).data(), d);
      mean_ /= n_;
      Matrix scatter = Matrix::Zero(d, d);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const Vector r = Eigen::Map<const Vector>(data.row(i).data(), d) - mean_;
        scatter.noalias() += r * r.transpose();
      }
      constant_ = n_ * model.log_norm_ - 0.5 * (precision_ * scatter).trace();
    }
    double eval(const Point& theta) const override {
      const Vector r = mean_ - theta;
      return constant_ - 0.5 * n_ * r.dot(precision_ * r);
    }

   private:
    Matrix precision_;
    Vector mean_;
    double n_ = 0.0;
    double constant_ = 0.0;
  };

 public:

 private:
  Matrix cov_;
  Matrix precision_;
  Matrix chol_;
  double log_norm_ = 0.0;
  std::string label_;
};

class LocationScaleModel final : public ParametricModel {
 public:
  LocationScaleModel(Chart chart, std::shared_ptr<const BaseDensity> phi, int nodes)
      : ParametricModel(std::move(chart)), phi_(std::move(phi)), nodes_(nodes) {}
  int obs_dim() const override { return 1; }
  std::string label() const override { return "location-scale(" + phi_->name() + ")"; }
  double log_density(std::span<const double> obs, const Point& theta) const override {
    return phi_->log_pdf((obs[0] - theta[0]) / theta[1]) - std::log(theta[1]);
  }
  Vector score(std::span<const double> obs, const Point& theta) const override {
    const double sigma = theta[1];
    const double z = (obs[0] - theta[0]) / sigma;
    const double psi = phi_->score(z);
    Vector s(2);
    s << -psi / sigma, -(1.0 + z * psi) / sigma;
    return s;
  }
  Matrix score_hessian(std::span<const double> obs, const Point& theta) const override {
    const double sigma = theta[1];
    const double z = (obs[0] - theta[0]) / sigma;
    const double psi = phi_->score(z);
    const double dpsi = phi_->score_derivative(z);
    Matrix H(2, 2);
    H(0, 0) = dpsi;
    H(0, 1) = H(1, 0) = psi + z * dpsi;
    H(1, 1) = 1.0 + 2.0 * z * psi + z * z * dpsi;
    return H / (sigma * sigma);
  }
  void sample(const Point& theta, Rng& rng, std::span<double> out) const override {
    out[0] = theta[0] + theta[1] * phi_->sample(rng);
  }
  ObservationRule observation_rule(const Point& theta, const ExpectationScheme& scheme) const override {
    if (scheme.mode == TensorMode::MonteCarlo) return ParametricModel::observation_rule(theta, scheme);
    const quadrature::Rule base = phi_->expectation_rule(scheme.quadrature_nodes > 0 ? scheme.quadrature_nodes : nodes_);
    ObservationRule rule;
    rule.obs_dim = 1;
    rule.weights = base.weights;
    rule.nodes.reserve(base.size());
    for (double z : base.nodes) rule.nodes.push_back(theta[0] + theta[1] * z);
    return rule;
  }
  std::unique_ptr<PreparedLikelihood> prepare_likelihood(const Dataset& data) const override {
    if (!phi_->is_standard_normal()) return ParametricModel::prepare_likelihood(data);
    if (data.obs_dim != 1) fail(ErrorKind::Spec, "dataset dimension does not match the model");
    return std::make_unique<GaussianLikelihood>(data);
  }
  std::unique_ptr<NodeDensity> prepare_nodes(std::span<const Point> thetas) const override {
    if (!phi_->is_standard_normal()) return ParametricModel::prepare_nodes(thetas);
    std::vector<double> mean, scale;
    for (const Point& t : thetas) {
      mean.push_back(t[0]);
      scale.push_back(t[1]);
    }
    return std::make_unique<GaussianNodeDensity>(std::move(mean), std::move(scale));
  }
  const BaseDensity& base() const { return *phi_; }

 private:
  class GaussianLikelihood final : public PreparedLikelihood {
   public:
    explicit GaussianLikelihood(const Dataset& data) : n_(static_cast<double>(data.size())) {
      for (double x : data.values) mean_ += x;
      mean_ /= n_;
      ss_ = kernels::sum_squared_deviation(data.values, mean_);
    }
    double eval(const Point& theta) const override {
      const double sigma = theta[1];
      const double r = mean_ - theta[0];
      return -(ss_ + n_ * r * r) / (2.0 * sigma * sigma) - n_ * std::log(sigma) -
             0.5 * n_ * std::log(2.0 * std::numbers::pi);
    }

   private:
    double n_;
    double mean_ = 0.0;
    double ss_ = 0.0;
  };

 public:

 private:
  std::shared_ptr<const BaseDensity> phi_;
  int nodes_;
};

// Independent Po(m_i lambda_i) coordinates.
class PoissonModel final : public ParametricModel {
 public:
  PoissonModel(Chart chart, Vector multipliers, std::string label)
      : ParametricModel(std::move(chart)), m_(std::move(multipliers)), label_(std::move(label)) {}
  int obs_dim() const override { return static_cast<int>(m_.size()); }
  std::string label() const override { return label_; }
  double log_density(std::span<const double> obs, const Point& theta) const override {
    double acc = 0.0;
    for (int i = 0; i < obs_dim(); ++i) {
      const double mean = m_[i] * theta[i];
      acc += obs[static_cast<std::size_t>(i)] * std::log(mean) - mean - std::lgamma(obs[static_cast<std::size_t>(i)] + 1.0);
    }
    return acc;
  }
  Vector score(std::span<const double> obs, const Point& theta) const override {
    Vector s(obs_dim());
    for (int i = 0; i < obs_dim(); ++i) s[i] = obs[static_cast<std::size_t>(i)] / theta[i] - m_[i];
    return s;
  }
  Matrix score_hessian(std::span<const double> obs, const Point& theta) const override {
    Matrix H = Matrix::Zero(obs_dim(), obs_dim());
    for (int i = 0; i < obs_dim(); ++i) H(i, i) = -obs[static_cast<std::size_t>(i)] / (theta[i] * theta[i]);
    return H;
  }
  void sample(const Point& theta, Rng& rng, std::span<double> out) const override {
    for (int i = 0; i < obs_dim(); ++i)
      out[static_cast<std::size_t>(i)] = static_cast<double>(std::poisson_distribution<long long>(m_[i] * theta[i])(rng));
  }
  ObservationRule observation_rule(const Point& theta, const ExpectationScheme& scheme) const override {
    if (scheme.mode == TensorMode::MonteCarlo) return ParametricModel::observation_rule(theta, scheme);
    const int d = obs_dim();
    std::vector<std::vector<double>> values(static_cast<std::size_t>(d)), probs(static_cast<std::size_t>(d));
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) {
      poisson_support(m_[i] * theta[i], scheme.series_tail_mass / d, values[static_cast<std::size_t>(i)],
                      probs[static_cast<std::size_t>(i)]);
      total *= values[static_cast<std::size_t>(i)].size();
      if (total > 4'000'000)
        fail(ErrorKind::Spec, "Poisson lattice too large for exact series; use the Monte Carlo scheme");
    }
    ObservationRule rule;
    rule.obs_dim = d;
    rule.nodes.reserve(total * static_cast<std::size_t>(d));
    rule.weights.reserve(total);
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    for (;;) {
      double w = 1.0;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        rule.nodes.push_back(values[i][idx[i]]);
        w *= probs[i][idx[i]];
      }
      rule.weights.push_back(w);
      std::size_t i = 0;
      for (; i < idx.size(); ++i) {
        if (++idx[i] < values[i].size()) break;
        idx[i] = 0;
      }
      if (i == idx.size()) break;
    }
    return rule;
  }

  std::unique_ptr<PreparedLikelihood> prepare_likelihood(const Dataset& data) const override {
    if (data.obs_dim != obs_dim()) fail(ErrorKind::Spec, "dataset dimension does not match the model");
    return std::make_unique<Likelihood>(*this, data);
  }

  // Support points [lo, hi] of Po(mean) outside of which at most `tail` mass lies.
  static void poisson_support(double mean, double tail, std::vector<double>& values, std::vector<double>& probs) {
    values.clear();
    probs.clear();
    const long long mode = static_cast<long long>(std::floor(mean));
    auto log_pmf = [mean](long long k) {
      return static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0);
    };
    // Walk down from the mode until the lower tail bound is met.
    long long lo = mode;
    double lower_mass = 0.0;
    {
      // P(X < lo) bounded by summing downwards; stop once remaining terms are negligible.
      long long k = mode;
      while (k > 0) {
        const double p = std::exp(log_pmf(k - 1));
        // Geometric bound on the remaining lower tail: p / (1 - k/mean ratio) <= p * mean/(mean - k + 1)...
        const double ratio = static_cast<double>(k - 1) / mean;  // pmf(j-1)/pmf(j) = j/mean <= (k-1)/mean
        const double bound = ratio < 1.0 ? p / (1.0 - ratio) : 1.0;
        if (bound < 0.5 * tail) break;
        --k;
        lower_mass += p;
      }
      lo = k;
    }
    double upper_bound = 1.0;
    long long k = lo;
    for (; upper_bound >= 0.5 * tail; ++k) {
      const double p = std::exp(log_pmf(k));
      values.push_back(static_cast<double>(k));
      probs.push_back(p);
      // Remaining upper tail after k is bounded geometrically once k+1 > mean.
      const double ratio = mean / static_cast<double>(k + 2);
      const double next = p * mean / static_cast<double>(k + 1);
      upper_bound = (static_cast<double>(k + 1) > mean && ratio < 1.0) ? next / (1.0 - ratio) : 1.0;
    }
    (void)lower_mass;
  }

 private:
  class Likelihood final : public PreparedLikelihood {
   public:
    Likelihood(const PoissonModel& model, const Dataset& data)
        : m_(model.m_), totals_(Vector::Zero(model.obs_dim())), n_(static_cast<double>(data.size())) {
      for (std::size_t i = 0; i < data.size(); ++i)
        for (int k = 0; k < model.obs_dim(); ++k) {
          const double x = data.row(i)[static_cast<std::size_t>(k)];
          totals_[k] += x;
          constant_ -= std::lgamma(x + 1.0);
        }
    }
    double eval(const Point& theta) const override {
      double acc = constant_;
      for (int k = 0; k < m_.size(); ++k) {
        const double mean = m_[k] * theta[k];
        acc += (totals_[k] > 0.0 ? totals_[k] * std::log(mean) : 0.0) - n_ * mean;
      }
      return acc;
    }

   private:
    Vector m_;
    Vector totals_;
    double n_;
    double constant_ = 0.0;
  };

  Vector m_;
  std::string label_;
};

Tensor3 scaled(const Tensor3& t, double c) { return c * Tensor3(t); }

}  // namespace

TensorSet location_scale_unit_tensors(const BaseDensity& phi, int quadrature_nodes) {
  const Chart chart = Chart::reference("mu_sigma", 2, {false, true});
  const LocationScaleModel model(chart, std::shared_ptr<const BaseDensity>(&phi, [](const BaseDensity*) {}),
                                 quadrature_nodes);
  ExpectationScheme scheme;
  scheme.quadrature_nodes = quadrature_nodes;
  Point unit(2);
  unit << 0.0, 1.0;
  return accumulate_tensors(model, model.observation_rule(unit, scheme), unit);
}

// ---------------------------------------------------------------------------
// ModelPair

ModelPair::ModelPair(Family family, Chart chart, ModelSide x, ModelSide y, FamilyInfo info,
                     std::vector<Chart> extra_charts)
    : family_(family),
      chart_(std::move(chart)),
      x_(std::move(x)),
      y_(std::move(y)),
      info_(std::move(info)),
      extra_charts_(std::move(extra_charts)) {
  if (!x_.model || !y_.model || !x_.tensors || !y_.tensors) fail(ErrorKind::Spec, "model pair with missing side");
  if (x_.model->dim() != chart_.dim() || y_.model->dim() != chart_.dim())
    fail(ErrorKind::Spec, "model dimensions do not match the parameter chart");
}

ModelPair ModelPair::custom(Chart chart, std::shared_ptr<const ParametricModel> x_model,
                            std::shared_ptr<const ParametricModel> y_model, ExpectationScheme scheme) {
  auto xt = std::make_shared<NumericTensorProvider>(x_model, scheme);
  auto yt = std::make_shared<NumericTensorProvider>(y_model, scheme);
  return ModelPair(Family::Custom, std::move(chart), {std::move(x_model), std::move(xt)},
                   {std::move(y_model), std::move(yt)});
}

const Chart& ModelPair::chart_named(const std::string& name) const {
  if (name.empty() || name == chart_.name() || name == "reference") return chart_;
  for (const Chart& c : extra_charts_)
    if (c.name() == name) return c;
  fail(ErrorKind::Spec, "unknown chart '" + name + "' for this model pair");
}

std::vector<std::string> ModelPair::chart_names() const {
  std::vector<std::string> names{chart_.name()};
  for (const Chart& c : extra_charts_) names.push_back(c.name());
  return names;
}

MetricField ModelPair::data_metric() const {
  auto side = x_.tensors;
  auto provenance = side->mode() == TensorMode::Analytic ? MetricField::Provenance::Analytic
                                                         : MetricField::Provenance::Numeric;
  return MetricField(chart_, [side](const Point& p) { return side->metric(p); }, provenance);
}

MetricField ModelPair::target_metric() const {
  auto side = y_.tensors;
  auto provenance = side->mode() == TensorMode::Analytic ? MetricField::Provenance::Analytic
                                                         : MetricField::Provenance::Numeric;
  return MetricField(chart_, [side](const Point& p) { return side->metric(p); }, provenance);
}

Matrix ModelPair::predictive_metric_at(const Point& theta) const {
  const Matrix g = x_.tensors->metric(theta);
  const Matrix gt = y_.tensors->metric(theta);
  Matrix out = g * Eigen::LLT<Matrix>(gt).solve(g);
  return 0.5 * (out + out.transpose());
}

MetricField ModelPair::predictive_metric() const {
  const ModelPair self = *this;
  const bool numeric = x_.tensors->mode() != TensorMode::Analytic || y_.tensors->mode() != TensorMode::Analytic;
  return MetricField(chart_, [self](const Point& p) { return self.predictive_metric_at(p); },
                     numeric ? MetricField::Provenance::Numeric : MetricField::Provenance::DerivedByFormula);
}

ModelPair ModelPair::with_x_tensors(std::shared_ptr<const TensorProvider> tensors) const {
  ModelPair copy = *this;
  copy.x_.tensors = std::move(tensors);
  return copy;
}

// ---------------------------------------------------------------------------
// Builtins

Chart upper_half_plane_chart(double k) {
  if (!(k > 0.0)) fail(ErrorKind::Spec, "upper-half-plane scale must be positive");
  Chart::Spec spec;
  spec.name = "upper_half_plane";
  spec.dim = 2;
  spec.positive = {false, true};
  spec.to_reference = [k](const Point& p) { return Point(Point{{p[0] / k, p[1]}}); };
  spec.from_reference = [k](const Point& r) { return Point(Point{{k * r[0], r[1]}}); };
  spec.jacobian_to_reference = [k](const Point&) { return Matrix(Eigen::Vector2d(1.0 / k, 1.0).asDiagonal()); };
  spec.jacobian_from_reference = [k](const Point&) { return Matrix(Eigen::Vector2d(k, 1.0).asDiagonal()); };
  return Chart(std::move(spec));
}

Chart poisson_xi_chart(const Vector& s) {
  Chart::Spec spec;
  spec.name = "xi";
  spec.dim = static_cast<int>(s.size());
  spec.positive.assign(static_cast<std::size_t>(s.size()), true);
  spec.to_reference = [s](const Point& xi) { return Point(s.cwiseProduct(xi.cwiseProduct(xi)) / 4.0); };
  spec.from_reference = [s](const Point& lambda) { return Point(2.0 * lambda.cwiseQuotient(s).cwiseSqrt()); };
  spec.jacobian_to_reference = [s](const Point& xi) { return Matrix((0.5 * s.cwiseProduct(xi)).asDiagonal()); };
  spec.jacobian_from_reference = [s](const Point& lambda) {
    return Matrix(s.cwiseProduct(lambda).cwiseSqrt().cwiseInverse().asDiagonal());
  };
  return Chart(std::move(spec));
}

ModelPair builtin_normal(const NormalPairSpec& spec) {
  const int d = static_cast<int>(spec.sigma.rows());
  if (d == 0 || spec.sigma.cols() != d || spec.sigma_tilde.rows() != d || spec.sigma_tilde.cols() != d)
    fail(ErrorKind::Spec, "normal pair covariances must be square and of equal size");
  MetricAt x_at, y_at;
  try {
    x_at = check_spd(spec.sigma);
    y_at = check_spd(spec.sigma_tilde);
  } catch (const Error& e) {
    fail(ErrorKind::Spec, std::string("normal pair covariance not SPD: ") + e.what());
  }
  const Chart chart = Chart::reference("mu", d);
  auto x_model = std::make_shared<NormalModel>(chart, spec.sigma, "normal(x)");
  auto y_model = std::make_shared<NormalModel>(chart, spec.sigma_tilde, "normal(y)");
  auto flat = [d](const Matrix& precision) {
    return std::make_shared<AnalyticTensorProvider>(
        [d, precision](const Point&) { return TensorSet{precision, Tensor3(d), Tensor3(d), Tensor3(d)}; },
        [precision](const Point&) { return precision; });
  };
  return ModelPair(Family::Normal, chart, {x_model, flat(x_at.inverse)}, {y_model, flat(y_at.inverse)}, spec);
}

namespace {

std::shared_ptr<const TensorProvider> location_scale_provider(const TensorSet& unit) {
  return std::make_shared<AnalyticTensorProvider>(
      [unit](const Point& theta) {
        const double sigma = theta[1];
        const double s2 = 1.0 / (sigma * sigma), s3 = s2 / sigma;
        return TensorSet{Matrix(unit.metric * s2), scaled(unit.skewness, s3), scaled(unit.gamma_e, s3),
                         scaled(unit.gamma_m, s3)};
      },
      [m = unit.metric](const Point& theta) { return Matrix(m / (theta[1] * theta[1])); });
}

void check_symmetric_base(const BaseDensity& phi, int nodes) {
  const quadrature::Rule rule = phi.expectation_rule(nodes);
  const double m1 = rule.apply([&](double z) { return phi.score(z); });
  const double m3 = rule.apply([&](double z) { return std::pow(phi.score(z), 3); });
  const double scale = rule.apply([&](double z) { return std::pow(std::abs(phi.score(z)), 3); }) + 1.0;
  if (std::abs(m1) > 1e-8 || std::abs(m3) > 1e-8 * scale)
    fail(ErrorKind::Spec, "base density '" + phi.name() + "' is not symmetric about the origin");
}

}  // namespace

ModelPair builtin_location_scale(const LocationScalePairSpec& spec) {
  if (!spec.phi || !spec.phi_tilde) fail(ErrorKind::Spec, "location-scale pair needs both base densities");
  if (spec.quadrature_nodes < 8) fail(ErrorKind::Spec, "location-scale quadrature needs at least 8 nodes");
  check_symmetric_base(*spec.phi, spec.quadrature_nodes);
  check_symmetric_base(*spec.phi_tilde, spec.quadrature_nodes);

  LocationScaleConstants c;
  c.x_unit = location_scale_unit_tensors(*spec.phi, spec.quadrature_nodes);
  c.y_unit = location_scale_unit_tensors(*spec.phi_tilde, spec.quadrature_nodes);
  c.a = c.x_unit.metric(0, 0);
  c.b = c.x_unit.metric(1, 1);
  c.a_tilde = c.y_unit.metric(0, 0);
  c.b_tilde = c.y_unit.metric(1, 1);
  if (!(c.a > 0 && c.b > 0 && c.a_tilde > 0 && c.b_tilde > 0))
    fail(ErrorKind::Spec, "location-scale Fisher constants must be positive");
  for (const TensorSet* t : {&c.x_unit, &c.y_unit}) {
    if (std::abs(t->metric(0, 1)) > 1e-8 * t->metric.cwiseAbs().maxCoeff())
      fail(ErrorKind::Spec, "location-scale metric has a non-vanishing mu-sigma entry");
  }

  const Chart chart = Chart::reference("mu_sigma", 2, {false, true});
  auto x_model = std::make_shared<LocationScaleModel>(chart, spec.phi, spec.quadrature_nodes);
  auto y_model = std::make_shared<LocationScaleModel>(chart, spec.phi_tilde, spec.quadrature_nodes);
  const double k = c.upper_half_plane_scale();
  auto xt = location_scale_provider(c.x_unit);
  auto yt = location_scale_provider(c.y_unit);
  return ModelPair(Family::LocationScale, chart, {x_model, xt}, {y_model, yt}, c, {upper_half_plane_chart(k)});
}

ModelPair numeric_location_scale(const LocationScalePairSpec& spec, ExpectationScheme scheme) {
  const ModelPair builtin = builtin_location_scale(spec);
  scheme.quadrature_nodes = spec.quadrature_nodes;
  auto xt = std::make_shared<NumericTensorProvider>(builtin.x_model_ptr(), scheme);
  auto yt = std::make_shared<NumericTensorProvider>(builtin.y_model_ptr(), scheme);
  return ModelPair(Family::LocationScale, builtin.chart(), {builtin.x_model_ptr(), xt}, {builtin.y_model_ptr(), yt},
                   *builtin.location_scale(), {builtin.chart_named("upper_half_plane")});
}

ModelPair builtin_poisson(const PoissonPairSpec& spec) {
  const int d = static_cast<int>(spec.s.size());
  if (d == 0) fail(ErrorKind::Spec, "Poisson pair needs at least one coordinate");
  for (int i = 0; i < d; ++i)
    if (!(spec.s[i] > 0.0) || !std::isfinite(spec.s[i])) fail(ErrorKind::Spec, "Poisson multipliers s_i must be positive");

  const Chart chart = Chart::reference("lambda", d, std::vector<bool>(static_cast<std::size_t>(d), true));
  auto x_model = std::make_shared<PoissonModel>(chart, Vector::Ones(d), "poisson(x)");
  auto y_model = std::make_shared<PoissonModel>(chart, spec.s, "poisson(y)");

  // For Po(m lambda): g = m/lambda, T = m/lambda^2, Gamma^e = -m/lambda^2, Gamma^m = 0.
  auto provider = [d](const Vector& m) {
    return std::make_shared<AnalyticTensorProvider>(
        [d, m](const Point& lambda) {
          TensorSet t{Matrix::Zero(d, d), Tensor3(d), Tensor3(d), Tensor3(d)};
          for (int i = 0; i < d; ++i) {
            const double l2 = lambda[i] * lambda[i];
            t.metric(i, i) = m[i] / lambda[i];
            t.skewness(i, i, i) = m[i] / l2;
            t.gamma_e(i, i, i) = -m[i] / l2;
          }
          return t;
        },
        [m](const Point& lambda) { return Matrix(m.cwiseQuotient(lambda).asDiagonal()); });
  };
  return ModelPair(Family::Poisson, chart, {x_model, provider(Vector::Ones(d))}, {y_model, provider(spec.s)}, spec,
                   {poisson_xi_chart(spec.s)});
}

}  // namespace predmetric
