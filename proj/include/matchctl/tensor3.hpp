#pragma once

#include <cassert>
#include <cmath>
#include <vector>

namespace matchctl {

/// Dense rank-3 tensor of doubles, row-major, n x n x n with small n.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), data_(static_cast<size_t>(n) * n * n, 0.0) {}

  int dim() const { return n_; }

  double& operator()(int i, int j, int k) {
    return data_[static_cast<size_t>((i * n_ + j) * n_ + k)];
  }
  double operator()(int i, int j, int k) const {
    return data_[static_cast<size_t>((i * n_ + j) * n_ + k)];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor3& operator+=(const Tensor3& o) {
    assert(n_ == o.n_);
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    assert(n_ == o.n_);
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }

 private:
  int n_ = 0;
  std::vector<double> data_;
};

}  // namespace matchctl
