#pragma once

#include "predmetric/models.hpp"
#include "predmetric/priors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

namespace testing {

using namespace predmetric;

inline Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

inline ModelPair gaussian_location_scale() {
  return builtin_location_scale({make_standard_normal(), make_standard_normal()});
}

inline ModelPair poisson(std::initializer_list<double> s) {
  Vector v(static_cast<Eigen::Index>(s.size()));
  Eigen::Index i = 0;
  for (double x : s) v[i++] = x;
  return builtin_poisson({v});
}

inline ModelPair normal(const Matrix& sigma, const Matrix& sigma_tilde) { return builtin_normal({sigma, sigma_tilde}); }

inline Matrix random_spd(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = z(rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

// Random points in a box, log-uniform on positive coordinates.
inline std::vector<Point> random_points(const ModelPair& pair, const Vector& lo, const Vector& hi, int count,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> out;
  for (int n = 0; n < count; ++n) {
    Point p(pair.dim());
    for (int i = 0; i < pair.dim(); ++i) {
      const double t = u(rng);
      p[i] = pair.chart().positive(i) ? lo[i] * std::pow(hi[i] / lo[i], t) : lo[i] + t * (hi[i] - lo[i]);
    }
    out.push_back(p);
  }
  return out;
}

// Kind of the library error thrown by f; Internal when nothing is thrown.
template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testing
