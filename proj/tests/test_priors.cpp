#include "support.hpp"

using namespace predmetric;
using testing::error_kind;
using testing::pt;

namespace {

std::vector<Point> ls_probes(const ModelPair& pair, int count = 40) {
  return make_probes(pair.chart(), pt({-2, 0.3}), pt({2, 4}), count);
}

ScalarField sigma_power(const Chart& chart, double p) {
  return ScalarField(
      chart, [p](const Point& t) { return std::pow(t[1], p); },
      [p](const Point& t) { return pt({0.0, p * std::pow(t[1], p - 1.0)}); },
      [p](const Point& t) {
        Matrix h = Matrix::Zero(2, 2);
        h(1, 1) = p * (p - 1.0) * std::pow(t[1], p - 2.0);
        return h;
      });
}

}  // namespace

TEST_CASE("volume_element_prior examples") {
  SUBCASE("normal pair is uniform") {
    std::mt19937_64 rng(4);
    const ModelPair pair = testing::normal(testing::random_spd(2, rng), testing::random_spd(2, rng));
    const PriorSpec p = volume_element_prior(pair);
    CHECK(p.kind() == PriorKind::VolumeElement);
    CHECK(p.log_density(pt({0.0, 0.0})) == doctest::Approx(p.log_density(pt({3.0, -1.0}))).epsilon(1e-14));
    CHECK(p.ratio()(pt({1.0, 2.0})) == 1.0);
  }
  SUBCASE("location-scale pair is 1/sigma^2") {
    const ModelPair pair = builtin_location_scale({make_logistic(), make_student_t(3.0)});
    const PriorSpec p = volume_element_prior(pair);
    const double base = p.log_density(pt({0.0, 1.0}));
    for (const Point& t : ls_probes(pair))
      CHECK(p.log_density(t) - base == doctest::Approx(-2.0 * std::log(t[1])).epsilon(1e-10));
  }
  SUBCASE("Poisson pair is prod lambda^-1/2") {
    const ModelPair pair = testing::poisson({0.5, 1.0, 3.0});
    const PriorSpec p = volume_element_prior(pair);
    const double base = p.log_density(pt({1, 1, 1}));
    for (const Point& t : make_probes(pair.chart(), pt({0.1, 0.1, 0.1}), pt({10, 10, 10}), 30))
      CHECK(p.log_density(t) - base == doctest::Approx(-0.5 * t.array().log().sum()).epsilon(1e-10));
  }
}

TEST_CASE("location-scale prior families") {
  const ModelPair pair = builtin_location_scale({make_logistic(), make_standard_normal()});
  const LocationScaleConstants& k = *pair.location_scale();
  const double w = k.location_weight();

  SUBCASE("closed ratio formulas") {
    const PriorSpec r = prior_right_invariant(pair);
    const PriorSpec cauchy = prior_cauchy(pair);
    for (const CkappaParams& p : {CkappaParams{0.0, 1.0}, CkappaParams{0.5, 2.0}, CkappaParams{1.0, 0.3}}) {
      const PriorSpec ck = prior_ckappa(pair, p);
      for (const Point& t : ls_probes(pair, 15)) {
        const double mu = t[0], s = t[1], c = p.c, kap = p.kappa;
        const double expect =
            2.0 * kap * s / (w * mu * mu + c * (s + kap) * (s + kap) + (1.0 - c) * (s * s + kap * kap));
        CHECK(ck.ratio()(t) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(ck.ratio()(t) == doctest::Approx(1.0 / (cosh_rho(k, kap, mu, s) + c)).epsilon(1e-12));
        CHECK(r.ratio()(t) == doctest::Approx(s).epsilon(1e-14));
        CHECK(cauchy.ratio()(t) == doctest::Approx(s / (w * mu * mu + s * s)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("ratio at the centre is 1/(1+c)") {
    for (double c : {0.0, 0.25, 1.0, 3.0})
      for (double kap : {0.5, 1.0, 4.0})
        CHECK(prior_ckappa(pair, {c, kap}).ratio()(pt({0.0, kap})) == doctest::Approx(1.0 / (1.0 + c)).epsilon(1e-14));
  }
  SUBCASE("kappa limits") {
    const Point t = pt({0.7, 1.3});
    double prev = INFINITY;
    for (double kap : {1e2, 1e4, 1e6}) {
      const double gap = std::abs(kap * prior_ckappa(pair, {0.5, kap}).ratio()(t) / 2.0 - t[1]);
      CHECK(gap < prev);
      prev = gap;
    }
    CHECK(prev < 1e-5);
    const double cauchy = prior_cauchy(pair).ratio()(t);
    prev = INFINITY;
    for (double kap : {1e-2, 1e-4, 1e-6}) {
      const double gap = std::abs(prior_ckappa(pair, {0.5, kap}).ratio()(t) / (2.0 * kap) - cauchy);
      CHECK(gap < prev);
      prev = gap;
    }
    CHECK(prev < 1e-5);
  }
  SUBCASE("errors") {
    const ModelPair po = testing::poisson({1.0, 1.0});
    CHECK(error_kind([&] { prior_right_invariant(po); }) == ErrorKind::Spec);
    CHECK(error_kind([&] { prior_ckappa(po, {}); }) == ErrorKind::Spec);
    CHECK(error_kind([&] { prior_cauchy(po); }) == ErrorKind::Spec);
    CHECK(error_kind([&] { prior_stein_poisson(pair); }) == ErrorKind::Spec);
  }
}

TEST_CASE("prior_stein_poisson examples") {
  CHECK(prior_stein_poisson(testing::poisson({0.5, 2.0})).ratio()(pt({0.3, 7.0})) == 1.0);
  CHECK(prior_stein_poisson(testing::poisson({1, 1, 1, 1})).ratio()(pt({1, 1, 1, 1})) ==
        doctest::Approx(0.25).epsilon(1e-15));

  SUBCASE("Green function in the xi chart") {
    const Vector s = pt({0.5, 1.0, 2.0});
    const ModelPair pair = builtin_poisson({s});
    const ScalarField f = prior_stein_poisson(pair).ratio();
    const Chart xi = poisson_xi_chart(s);
    const ScalarField g = pullback_scalar(f, xi);
    std::vector<double> ratios;
    for (const Point& t : make_probes(pair.chart(), pt({0.1, 0.1, 0.1}), pt({9, 9, 9}), 20)) {
      const Point z = xi.from_reference(t);
      ratios.push_back(g(z) * z.norm());
    }
    for (double r : ratios) CHECK(r == doctest::Approx(ratios.front()).epsilon(1e-12));
  }
  SUBCASE("analytic gradient agrees with finite differences") {
    const ModelPair pair = testing::poisson({0.5, 1.0, 2.0, 4.0});
    const ScalarField f = prior_stein_poisson(pair).ratio();
    REQUIRE(f.has_gradient());
    const ScalarField plain(pair.chart(), [&](const Point& t) { return f(t); });
    for (const Point& t : make_probes(pair.chart(), Vector::Constant(4, 0.2), Vector::Constant(4, 6.0), 10)) {
      const Vector a = f.gradient(t), n = plain.gradient(t);
      CHECK((a - n).norm() <= 1e-7 * a.norm());
    }
  }
}

TEST_CASE("superharmonic_check examples") {
  const ModelPair pair = testing::gaussian_location_scale();
  const MetricField m = pair.predictive_metric();
  const auto probes = ls_probes(pair);
  SUBCASE("sigma is harmonic") {
    const auto rep = superharmonic_check(sigma_power(pair.chart(), 1.0), m, probes);
    CHECK(rep.verdict == SuperharmonicVerdict::Superharmonic);
    for (double l : rep.laplacian) CHECK(std::abs(l) < 1e-8);
  }
  SUBCASE("Stein ratio is harmonic in d = 3") {
    const ModelPair po = testing::poisson({0.5, 1.0, 2.0});
    const auto rep = superharmonic_check(prior_stein_poisson(po).ratio(), po.predictive_metric(),
                                         make_probes(po.chart(), pt({0.2, 0.2, 0.2}), pt({5, 5, 5}), 30));
    CHECK(rep.verdict == SuperharmonicVerdict::Superharmonic);
    for (std::size_t i = 0; i < rep.laplacian.size(); ++i) CHECK(std::abs(rep.laplacian[i]) <= rep.tolerance[i]);
  }
  SUBCASE("sigma^2 is violated") {
    const auto rep = superharmonic_check(sigma_power(pair.chart(), 2.0), m, probes);
    CHECK(rep.verdict == SuperharmonicVerdict::Violated);
    for (std::size_t i = 0; i < probes.size(); ++i)
      CHECK(rep.laplacian[i] == doctest::Approx(probes[i][1] * probes[i][1]).epsilon(1e-6));
  }
  SUBCASE("sigma^1/2 is strictly superharmonic") {
    const auto rep = superharmonic_check(prior_right_invariant(pair).ratio().sqrt(), m, probes);
    CHECK(rep.verdict == SuperharmonicVerdict::StrictSomewhere);
    for (std::size_t i = 0; i < probes.size(); ++i)
      CHECK(rep.laplacian[i] == doctest::Approx(-std::sqrt(probes[i][1]) / 8.0).epsilon(1e-6));
  }
  SUBCASE("constants are harmonic") {
    const auto rep = superharmonic_check(ScalarField::constant(pair.chart(), 3.0), m, probes);
    CHECK(rep.verdict == SuperharmonicVerdict::Superharmonic);
    CHECK(rep.max_laplacian == 0.0);
  }
}

TEST_CASE("power_prior examples") {
  const ModelPair pair = testing::gaussian_location_scale();
  const PriorSpec r = prior_right_invariant(pair);
  CHECK(equal_up_to_constant(power_prior(r, 1.0), r, ls_probes(pair)));
  const PriorSpec half = power_prior(r, 0.5);
  CHECK(half.ratio()(pt({0.3, 4.0})) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(error_kind([&] { power_prior(r, 0.0); }) == ErrorKind::Range);
  CHECK(error_kind([&] { power_prior(r, 1.5); }) == ErrorKind::Range);
}

TEST_CASE("equality up to a positive constant") {
  const ModelPair pair = testing::gaussian_location_scale();
  const PriorSpec r = prior_right_invariant(pair);
  const ScalarField scaled(pair.chart(), [](const Point& t) { return 7.5 * t[1]; });
  CHECK(equal_up_to_constant(prior_from_ratio(pair, "7.5 sigma", scaled), r, ls_probes(pair)));
  CHECK_FALSE(equal_up_to_constant(prior_cauchy(pair), r, ls_probes(pair)));
  const ScalarField bad(pair.chart(), [](const Point& t) { return t[0]; });
  CHECK(error_kind([&] { prior_from_ratio(pair, "bad", bad).log_density(pt({-1.0, 1.0})); }) ==
        ErrorKind::NonPositiveRatio);
}

TEST_CASE("random bump priors are positive and reproducible") {
  const ModelPair pair = testing::poisson({0.5, 1.0, 2.0});
  const Vector lo = pt({0.2, 0.2, 0.2}), hi = pt({5, 5, 5});
  const PriorSpec a = random_bump_prior(pair, lo, hi, 9), b = random_bump_prior(pair, lo, hi, 9);
  const PriorSpec c = random_bump_prior(pair, lo, hi, 10);
  const ScalarField& f = a.ratio();
  const ScalarField plain(pair.chart(), [&](const Point& t) { return f(t); });
  bool differs = false;
  for (const Point& t : make_probes(pair.chart(), lo, hi, 25)) {
    CHECK(f(t) > 0.0);
    CHECK(f(t) == b.ratio()(t));
    differs = differs || f(t) != c.ratio()(t);
    CHECK((f.gradient(t) - plain.gradient(t)).norm() <= 1e-7 * (1.0 + f.gradient(t).norm()));
    CHECK((f.hessian(t) - plain.hessian(t)).norm() <= 1e-5 * (1.0 + f.hessian(t).norm()));
  }
  CHECK(differs);
}

TEST_CASE("probes respect the chart domain") {
  const ModelPair pair = testing::poisson({1.0, 1.0});
  const auto probes = make_probes(pair.chart(), pt({1e-3, 1e-3}), pt({1e3, 1e3}), 200, {pt({0.5, 0.5})});
  CHECK(probes.size() == 201);
  CHECK(probes.front() == pt({0.5, 0.5}));
  for (const Point& p : probes) CHECK(pair.chart().admits(p));
  CHECK(error_kind([&] { make_probes(pair.chart(), pt({0.1, 0.1}), pt({1, 1}), 1, {pt({-1.0, 1.0})}); }) ==
        ErrorKind::Domain);
}

TEST_CASE("property: pi_P is invariant under metric rescaling") {
  const ModelPair pair = builtin_location_scale({make_logistic(), make_student_t(6.0)});
  const MetricField m = pair.predictive_metric();
  for (double c : {0.01, 3.0, 250.0})
    CHECK(equal_up_to_constant(volume_element_prior(scale_metric(m, c)), volume_element_prior(pair), ls_probes(pair)));
}

TEST_CASE("property: conventional setting gives Jeffreys") {
  std::vector<ModelPair> pairs{builtin_location_scale({make_logistic(), make_logistic()}), testing::poisson({1, 1, 1})};
  std::mt19937_64 rng(8);
  const Matrix s = testing::random_spd(3, rng);
  pairs.push_back(testing::normal(s, s));
  for (const ModelPair& pair : pairs) {
    const Vector lo = pair.family() == Family::LocationScale ? pt({-2, 0.3}) : Vector(Vector::Constant(pair.dim(), 0.2));
    const Vector hi = pair.family() == Family::LocationScale ? pt({2, 4}) : Vector(Vector::Constant(pair.dim(), 5.0));
    const auto probes = make_probes(pair.chart(), lo, hi, 40);
    CHECK(ratio_coefficient_of_variation(volume_element_prior(pair), jeffreys_prior(pair), probes) <= 1e-10);
  }
}

TEST_CASE("property: proportional volume elements for linearly related normal pairs") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix sigma = testing::random_spd(3, rng);
    Matrix a(3, 3);
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = z(rng);
    a += 2.0 * Matrix::Identity(3, 3);
    const ModelPair pair = testing::normal(sigma, a.transpose() * sigma * a);
    const auto probes = make_probes(pair.chart(), Vector::Constant(3, -3.0), Vector::Constant(3, 3.0), 20);
    CHECK(ratio_coefficient_of_variation(volume_element_prior(pair), jeffreys_prior(pair), probes) <= 1e-10);
    const PriorSpec y_jeffreys("y jeffreys", ScalarField::constant(pair.chart(), 1.0),
                               [&](const Point& t) { return 0.5 * std::log(pair.target_metric()(t).determinant()); });
    CHECK(ratio_coefficient_of_variation(volume_element_prior(pair), y_jeffreys, probes) <= 1e-10);
  }
}

TEST_CASE("property: superharmonicity is preserved by powers") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const ModelPair ls = testing::gaussian_location_scale();
  const ModelPair po = testing::poisson({0.5, 1.0, 2.0, 1.5});
  const auto ls_pts = ls_probes(ls, 20);
  const auto po_pts = make_probes(po.chart(), Vector::Constant(4, 0.2), Vector::Constant(4, 5.0), 20);
  for (int trial = 0; trial < 20; ++trial) {
    const bool use_ls = trial % 2 == 0;
    const ModelPair& pair = use_ls ? ls : po;
    const auto& probes = use_ls ? ls_pts : po_pts;
    const PriorSpec f = use_ls ? prior_right_invariant(pair) : prior_stein_poisson(pair);
    const double c = u(rng);
    const MetricField m = pair.predictive_metric();
    const auto base = superharmonic_check(f.ratio(), m, probes);
    REQUIRE(base.verdict != SuperharmonicVerdict::Violated);
    const auto powered = superharmonic_check(power_prior(f, c).ratio(), m, probes);
    CHECK(powered.verdict != SuperharmonicVerdict::Violated);
  }
}
