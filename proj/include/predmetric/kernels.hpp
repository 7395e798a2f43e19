#pragma once

// Data-parallel inner loops used by posterior grids and predictive densities.
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant; the dispatched entry points pick one at first use based
// on the running CPU. Variants agree to ~1e-14 relative (see kernel tests).

#include <span>
#include <string_view>

namespace predmetric::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;
// Fixed for the lifetime of the process.
Isa active_isa() noexcept;

// log sum_i exp(a_i); -inf for empty input or all -inf entries.
double logsumexp(std::span<const double> a);
// log sum_i exp(a_i + b_i).
double logsumexp_sum(std::span<const double> a, std::span<const double> b);
// out_i = offset_i - 0.5 * ((y - mean_i) * inv_scale_i)^2; out may alias offset.
void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out);
// sum_i (x_i - m)^2.
double sum_squared_deviation(std::span<const double> x, double m);
// y_i += alpha * x_i.
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);

namespace scalar {
double logsumexp(std::span<const double> a);
double logsumexp_sum(std::span<const double> a, std::span<const double> b);
void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out);
double sum_squared_deviation(std::span<const double> x, double m);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define PREDMETRIC_HAVE_AVX2_KERNELS 1
namespace avx2 {
// Callers must check isa_available(Isa::Avx2) first.
double logsumexp(std::span<const double> a);
double logsumexp_sum(std::span<const double> a, std::span<const double> b);
void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out);
double sum_squared_deviation(std::span<const double> x, double m);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace avx2
#endif

}  // namespace predmetric::kernels
