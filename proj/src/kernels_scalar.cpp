#include "predmetric/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace predmetric::kernels::scalar {

double logsumexp(std::span<const double> a) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : a) s += std::exp(v - m);
  return m + std::log(s);
}

double logsumexp_sum(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, a[i] + b[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::exp(a[i] + b[i] - m);
  return m + std::log(s);
}

void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out) {
  assert(mean.size() == out.size() && inv_scale.size() == out.size() && offset.size() == out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = (y - mean[i]) * inv_scale[i];
    out[i] = offset[i] - 0.5 * z * z;
  }
}

double sum_squared_deviation(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace predmetric::kernels::scalar
