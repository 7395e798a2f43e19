#include "support.hpp"

#include "predmetric/geometry.hpp"
#include "predmetric/priors.hpp"

using namespace predmetric;
using testing::pt;

namespace {

Chart half_plane() { return Chart::reference("half_plane", 2, {false, true}); }

// delta_ij / v^2 on the upper half plane.
MetricField hyperbolic() {
  return MetricField(half_plane(), [](const Point& p) { return Matrix(Matrix::Identity(2, 2) / (p[1] * p[1])); },
                     MetricField::Provenance::Analytic);
}

ScalarField sigma_field(const ModelPair& pair) {
  return ScalarField(pair.chart(), [](const Point& p) { return p[1]; });
}

}  // namespace

TEST_CASE("metric_inverse_and_det on fixed matrices") {
  const Chart flat = Chart::reference("flat", 2);
  Matrix d(2, 2);
  d << 1, 0, 0, 2;
  const MetricAt m = metric_inverse_and_det(MetricField(flat, [d](const Point&) { return d; },
                                                        MetricField::Provenance::Analytic),
                                            pt({0, 0}));
  CHECK(m.det == doctest::Approx(2.0));
  CHECK(m.inverse(0, 0) == doctest::Approx(1.0));
  CHECK(m.inverse(1, 1) == doctest::Approx(0.5));
  CHECK((m.metric * m.inverse - Matrix::Identity(2, 2)).norm() < 1e-12);

  const MetricAt id = check_spd(Matrix::Identity(3, 3));
  CHECK(id.det == 1.0);
  CHECK((id.inverse - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("location-scale Gaussian metric at sigma = 2 has determinant 1/8") {
  const ModelPair pair = testing::gaussian_location_scale();
  const MetricAt m = metric_inverse_and_det(pair.data_metric(), pt({0.3, 2.0}));
  CHECK(m.metric(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.metric(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.det == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("check_spd rejects asymmetric and indefinite matrices") {
  Matrix a(2, 2);
  a << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(check_spd(a), Error);
  Matrix b(2, 2);
  b << 1, 2, 2, 1;
  try {
    check_spd(b);
    FAIL("expected NonSPD");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonSPD);
  }
}

TEST_CASE("domain and boundary errors") {
  const ModelPair pair = testing::gaussian_location_scale();
  try {
    metric_inverse_and_det(pair.data_metric(), pt({0.0, -1.0}));
    FAIL("expected DomainError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
  // Positive coordinate with an absolute step scale: the stencil would leave the domain.
  Chart::Spec spec;
  spec.name = "clamped";
  spec.dim = 1;
  spec.positive = {true};
  spec.step_scale = {1.0};
  spec.to_reference = [](const Point& p) { return p; };
  spec.from_reference = [](const Point& p) { return p; };
  spec.jacobian_to_reference = [](const Point&) { return Matrix(Matrix::Identity(1, 1)); };
  spec.jacobian_from_reference = [](const Point&) { return Matrix(Matrix::Identity(1, 1)); };
  const Chart clamped(spec);
  try {
    fd_gradient([](const Point& p) { return std::log(p[0]); }, pt({1e-4}), clamped);
    FAIL("expected DomainError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("riemannian_connection examples") {
  SUBCASE("flat metric") {
    const Chart flat = Chart::reference("flat", 3);
    const MetricField m(flat, [](const Point&) { return Matrix(Matrix::Identity(3, 3)); },
                        MetricField::Provenance::Analytic);
    CHECK(riemannian_connection(m, pt({0.1, -2, 3})).max_abs() == 0.0);
  }
  SUBCASE("hyperbolic half plane at (0, 1)") {
    const MetricField m = hyperbolic();
    const Point p = pt({0.0, 1.0});
    const Tensor3 raised = raise_last(riemannian_connection(m, p), check_spd(m(p)).inverse);
    // index 0 = u, 1 = v
    CHECK(raised(0, 1, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(raised(1, 0, 0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(raised(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(raised(1, 1, 1) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(std::abs(raised(0, 0, 0)) < 1e-9);
    CHECK(std::abs(raised(1, 1, 0)) < 1e-9);
  }
  SUBCASE("Poisson predictive metric, d = 1, s = 1") {
    const ModelPair pair = testing::poisson({1.0});
    for (double lambda : {0.3, 1.0, 4.0}) {
      const Tensor3 g0 = riemannian_connection(pair.predictive_metric(), pt({lambda}));
      // hand derivative of 1/(s lambda)
      CHECK(g0(0, 0, 0) == doctest::Approx(-0.5 / (lambda * lambda)).epsilon(1e-9));
    }
  }
}

TEST_CASE("laplace_beltrami examples") {
  const ModelPair pair = testing::gaussian_location_scale();
  const MetricField gr = pair.predictive_metric();
  const ScalarField sigma = sigma_field(pair);
  const ScalarField root = sigma.sqrt();
  for (const Point& p : {pt({0.0, 1.0}), pt({1.5, 0.4}), pt({-2.0, 3.0})}) {
    CHECK(std::abs(laplace_beltrami(gr, sigma, p)) < 1e-8);
    // b~ / (4 b^2) with b = b~ = 2
    CHECK(laplace_beltrami(gr, root, p) == doctest::Approx(-0.125 * std::sqrt(p[1])).epsilon(1e-7));
  }
  const ModelPair po = testing::poisson({1.0, 0.5, 2.0});
  const PriorSpec stein = prior_stein_poisson(po);
  for (const Point& p : {pt({1, 1, 1}), pt({0.2, 3, 0.7})})
    CHECK(std::abs(laplace_beltrami(po.predictive_metric(), stein.ratio(), p)) < 1e-7);
}

TEST_CASE("pushforward_metric examples") {
  SUBCASE("Poisson to xi is the identity") {
    const ModelPair pair = testing::poisson({0.1, 0.2, 3.0});
    const Chart& xi = pair.chart_named("xi");
    const MetricField pushed = pushforward_metric(pair.predictive_metric(), pair.chart(), xi);
    for (const Point& p : {pt({1, 1, 1}), pt({0.3, 7, 0.05})}) {
      const Matrix m = pushed(transfer(p, pair.chart(), xi));
      CHECK((m - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("location-scale to the upper half plane is hyperbolic") {
    const ModelPair pair = builtin_location_scale({make_logistic(), make_student_t(5.0)});
    const LocationScaleConstants& c = *pair.location_scale();
    const Chart& uhp = pair.chart_named("upper_half_plane");
    const MetricField pushed = pushforward_metric(pair.predictive_metric(), pair.chart(), uhp);
    for (const Point& p : {pt({0, 1}), pt({1.3, 0.4})}) {
      const Point q = transfer(p, pair.chart(), uhp);
      const Matrix expect = Matrix::Identity(2, 2) * (c.b * c.b / c.b_tilde) / (q[1] * q[1]);
      CHECK((pushed(q) - expect).cwiseAbs().maxCoeff() < 1e-10 * expect(0, 0));
    }
  }
  SUBCASE("identity chart leaves the metric unchanged") {
    const ModelPair pair = testing::gaussian_location_scale();
    const MetricField pushed = pushforward_metric(pair.data_metric(), pair.chart(), pair.chart());
    const Point p = pt({0.2, 1.7});
    CHECK((pushed(p) - pair.data_metric()(p)).norm() == doctest::Approx(0.0));
  }
  SUBCASE("dimension mismatch") {
    const ModelPair pair = testing::gaussian_location_scale();
    try {
      pushforward_metric(pair.data_metric(), pair.chart(), Chart::reference("line", 1));
      FAIL("expected ChartMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ChartMismatch);
    }
  }
}

TEST_CASE("fd_gradient and fd_hessian examples") {
  const Chart line = Chart::reference("line", 1);
  auto sq = [](const Point& p) { return p[0] * p[0]; };
  CHECK(fd_gradient(sq, pt({3.0}), line)[0] == doctest::Approx(6.0).epsilon(1e-10));
  CHECK(fd_hessian(sq, pt({3.0}), line)(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  const Chart pos = Chart::reference("pos", 1, {true});
  CHECK(fd_gradient([](const Point& p) { return std::log(p[0]); }, pt({2.0}), pos)[0] ==
        doctest::Approx(0.5).epsilon(1e-10));

  const ModelPair pair = testing::gaussian_location_scale();
  const LocationScaleConstants& c = *pair.location_scale();
  for (double kappa : {0.5, 1.0, 3.0}) {
    const Vector g = fd_gradient([&](const Point& p) { return cosh_rho(c, kappa, p[0], p[1]); }, pt({0.0, kappa}),
                                 pair.chart());
    CHECK(g.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("property: builtin metrics symmetric and positive definite at random points") {
  std::vector<ModelPair> pairs{testing::gaussian_location_scale(), testing::poisson({0.5, 2.0, 1.0}),
                               builtin_location_scale({make_logistic(), make_student_t(3.0)})};
  std::mt19937_64 rng(4);
  pairs.push_back(testing::normal(testing::random_spd(3, rng), testing::random_spd(3, rng)));
  for (const ModelPair& pair : pairs) {
    const int d = pair.dim();
    Vector lo = Vector::Constant(d, -3.0), hi = Vector::Constant(d, 3.0);
    for (int i = 0; i < d; ++i)
      if (pair.chart().positive(i)) lo[i] = 0.05, hi[i] = 20.0;
    for (const Point& p : testing::random_points(pair, lo, hi, 100, 9)) {
      for (const MetricField& m : {pair.data_metric(), pair.target_metric(), pair.predictive_metric()}) {
        const Matrix g = m(p);
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * g.cwiseAbs().maxCoeff());
        CHECK_NOTHROW(check_spd(g));
      }
    }
  }
}

TEST_CASE("property: determinant-derivative identities") {
  std::vector<ModelPair> pairs{builtin_location_scale({make_logistic(), make_standard_normal()}),
                               testing::poisson({0.5, 2.0})};
  for (const ModelPair& pair : pairs) {
    Vector lo(pair.dim()), hi(pair.dim());
    if (pair.family() == Family::LocationScale) {
      lo << -2, 0.3;
      hi << 2, 3;
    } else {
      lo.setConstant(0.2);
      hi.setConstant(5);
    }
    for (const Point& p : testing::random_points(pair, lo, hi, 20, 3)) {
      const MetricField g = pair.data_metric(), gt = pair.target_metric(), gr = pair.predictive_metric();
      for (const MetricField& m : {g, gt, gr}) {
        const Vector trace = connection_trace(raise_last(riemannian_connection(m, p), check_spd(m(p)).inverse));
        CHECK((log_volume_gradient(m, p) - trace).cwiseAbs().maxCoeff() < 1e-6);
      }
      const Vector split = 2.0 * log_volume_gradient(g, p) - log_volume_gradient(gt, p);
      CHECK((log_volume_gradient(gr, p) - split).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("property: Laplacian is chart invariant") {
  const ModelPair pair = builtin_location_scale({make_standard_normal(), make_logistic()});
  const Chart& uhp = pair.chart_named("upper_half_plane");
  const MetricField gr = pair.predictive_metric();
  const MetricField pushed = pushforward_metric(gr, pair.chart(), uhp);
  const PriorSpec bump = random_bump_prior(pair, pt({-2, 0.3}), pt({2, 3}), 5);
  for (const ScalarField& f : {bump.ratio(), ScalarField(pair.chart(), [](const Point& p) { return p[1] * p[1] + p[0]; })})
    for (const Point& p : {pt({0.1, 1.0}), pt({-1.2, 0.6}), pt({0.7, 2.2})}) {
      const double a = laplace_beltrami(gr, f, p);
      const double b = laplace_beltrami(pushed, pullback_scalar(f, uhp), transfer(p, pair.chart(), uhp));
      CHECK(std::abs(a - b) <= 1e-6 * (1.0 + std::abs(a)));
    }
}

TEST_CASE("property: rescaling the metric by c divides the Laplacian by c") {
  const ModelPair pair = testing::poisson({0.5, 1.0, 2.0});
  const PriorSpec bump = random_bump_prior(pair, pt({0.2, 0.2, 0.2}), pt({4, 4, 4}), 8);
  const Point p = pt({1.1, 0.6, 2.5});
  const double base = laplace_beltrami(pair.predictive_metric(), bump.ratio(), p);
  for (double c : {0.5, 2.0, 10.0})
    CHECK(laplace_beltrami(scale_metric(pair.predictive_metric(), c), bump.ratio(), p) ==
          doctest::Approx(base / c).epsilon(1e-8));
}

TEST_CASE("property: analytic derivatives agree with finite differences") {
  const ModelPair ls = testing::gaussian_location_scale();
  const ModelPair po = testing::poisson({1.0, 0.5, 2.0});
  std::vector<std::pair<PriorSpec, Point>> cases{
      {prior_ckappa(ls, {0.5, 1.5}), pt({0.4, 0.8})},
      {prior_cauchy(ls), pt({-0.3, 1.4})},
      {prior_stein_poisson(po), pt({0.5, 1.2, 3.0})},
      {random_bump_prior(po, pt({0.2, 0.2, 0.2}), pt({4, 4, 4}), 2), pt({1, 2, 0.5})},
      {random_bump_prior(ls, pt({-2, 0.3}), pt({2, 3}), 3), pt({0.5, 1.0})}};
  for (const auto& [prior, p] : cases) {
    const ScalarField& f = prior.ratio();
    REQUIRE(f.has_gradient());
    const ScalarField fd(f.chart(), [f](const Point& q) { return f(q); });
    const Vector ga = f.gradient(p), gf = fd.gradient(p);
    CHECK((ga - gf).norm() <= 1e-5 * (1.0 + ga.norm()));
    if (f.has_hessian()) {
      const Matrix ha = f.hessian(p), hf = fd.hessian(p);
      CHECK((ha - hf).norm() <= 1e-5 * (1.0 + ha.norm()));
    }
  }
}
