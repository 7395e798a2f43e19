#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace predmetric {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A parameter value theta in the coordinates of some chart.
using Point = Eigen::VectorXd;

// Dense d x d x d array with lower indices (i, j, k).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int dim) : dim_(dim), data_(static_cast<std::size_t>(dim) * dim * dim, 0.0) {}

  int dim() const noexcept { return dim_; }

  double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }

  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
    return *this;
  }
  Tensor3& operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
  }
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator*(double c, Tensor3 a) { return a *= c; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  const std::vector<double>& raw() const noexcept { return data_; }

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dim_ + j) * dim_ + k;
  }

  int dim_ = 0;
  std::vector<double> data_;
};

// Gamma_ij^k = sum_l Gamma_ijl G^{kl}.
Tensor3 raise_last(const Tensor3& lower, const Matrix& inverse_metric);

}  // namespace predmetric
