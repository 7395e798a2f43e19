#include "predmetric/kernels.hpp"

namespace predmetric::kernels {

namespace {

struct Table {
  Isa isa;
  double (*logsumexp)(std::span<const double>);
  double (*logsumexp_sum)(std::span<const double>, std::span<const double>);
  void (*gaussian_log_kernel)(double, std::span<const double>, std::span<const double>, std::span<const double>,
                              std::span<double>);
  double (*sum_squared_deviation)(std::span<const double>, double);
  void (*axpy)(double, std::span<const double>, std::span<double>);
  double (*dot)(std::span<const double>, std::span<const double>);
};

Table select() {
#ifdef PREDMETRIC_HAVE_AVX2_KERNELS
  if (isa_available(Isa::Avx2))
    return {Isa::Avx2,          avx2::logsumexp,
            avx2::logsumexp_sum, avx2::gaussian_log_kernel,
            avx2::sum_squared_deviation, avx2::axpy,
            avx2::dot};
#endif
  return {Isa::Scalar,           scalar::logsumexp,
          scalar::logsumexp_sum, scalar::gaussian_log_kernel,
          scalar::sum_squared_deviation, scalar::axpy,
          scalar::dot};
}

const Table& table() {
  static const Table t = select();
  return t;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) noexcept {
  if (isa == Isa::Scalar) return true;
#ifdef PREDMETRIC_HAVE_AVX2_KERNELS
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() noexcept { return table().isa; }

double logsumexp(std::span<const double> a) { return table().logsumexp(a); }
double logsumexp_sum(std::span<const double> a, std::span<const double> b) { return table().logsumexp_sum(a, b); }
void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out) {
  table().gaussian_log_kernel(y, mean, inv_scale, offset, out);
}
double sum_squared_deviation(std::span<const double> x, double m) { return table().sum_squared_deviation(x, m); }
void axpy(double alpha, std::span<const double> x, std::span<double> y) { table().axpy(alpha, x, y); }
double dot(std::span<const double> a, std::span<const double> b) { return table().dot(a, b); }

}  // namespace predmetric::kernels
