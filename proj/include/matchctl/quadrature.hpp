#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace matchctl {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int evaluations = 0;
};

namespace detail {

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
inline constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr double kWg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

template <class F>
inline void gk15(const F& f, double a, double b, double* kronrod,
                 double* err) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kXgk[i]);
    fv[14 - i] = f(c + h * kXgk[i]);
  }
  fv[7] = f(c);
  double resk = 0.0, resg = 0.0;
  for (int i = 0; i < 7; ++i) resk += kWgk[i] * (fv[i] + fv[14 - i]);
  resk += kWgk[7] * fv[7];
  // Gauss points are the odd-indexed Kronrod nodes.
  for (int i = 0; i < 3; ++i) resg += kWg[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  resg += kWg[3] * fv[7];
  *kronrod = resk * h;
  *err = std::abs((resk - resg) * h);
}

template <class F>
inline void adapt(const F& f, double a, double b, double tol, int depth,
                  QuadratureResult* out) {
  double v, e;
  gk15(f, a, b, &v, &e);
  out->evaluations += 15;
  if (e <= tol || depth >= 48 || std::abs(b - a) < 1e-14) {
    out->value += v;
    out->error_estimate += e;
    return;
  }
  const double m = 0.5 * (a + b);
  adapt(f, a, m, 0.5 * tol, depth + 1, out);
  adapt(f, m, b, 0.5 * tol, depth + 1, out);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod 15(7) integration to an absolute tolerance.
/// Handles a > b by sign flip.
inline QuadratureResult integrate(const std::function<double(double)>& f,
                                  double a, double b, double abs_tol = 1e-10) {
  QuadratureResult out;
  if (a == b) return out;
  const double sign = (a <= b) ? 1.0 : -1.0;
  const double lo = std::min(a, b), hi = std::max(a, b);
  detail::adapt(f, lo, hi, abs_tol, 0, &out);
  out.value *= sign;
  return out;
}

/// Monotonicity-preserving cubic interpolation table (Fritsch-Carlson
/// limited Hermite slopes). Derivative is the interpolant's derivative.
class MonotoneCubicTable {
 public:
  MonotoneCubicTable() = default;

  MonotoneCubicTable(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)) {
    const size_t n = xs_.size();
    if (n < 2 || ys_.size() != n)
      throw std::invalid_argument("MonotoneCubicTable: need >= 2 nodes");
    slopes_.resize(n);
    std::vector<double> d(n - 1);
    for (size_t i = 0; i + 1 < n; ++i)
      d[i] = (ys_[i + 1] - ys_[i]) / (xs_[i + 1] - xs_[i]);
    slopes_[0] = d[0];
    slopes_[n - 1] = d[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) slopes_[i] = 0.5 * (d[i - 1] + d[i]);
    // Fritsch-Carlson limiter.
    for (size_t i = 0; i + 1 < n; ++i) {
      if (d[i] == 0.0) {
        slopes_[i] = slopes_[i + 1] = 0.0;
      } else {
        const double al = slopes_[i] / d[i];
        const double be = slopes_[i + 1] / d[i];
        const double s = al * al + be * be;
        if (s > 9.0) {
          const double t = 3.0 / std::sqrt(s);
          slopes_[i] = t * al * d[i];
          slopes_[i + 1] = t * be * d[i];
        }
      }
    }
  }

  double min_x() const { return xs_.front(); }
  double max_x() const { return xs_.back(); }

  double operator()(double x) const {
    const auto [i, t, h] = locate(x);
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    return h00 * ys_[i] + h10 * h * slopes_[i] + h01 * ys_[i + 1] +
           h11 * h * slopes_[i + 1];
  }

  double derivative(double x) const {
    const auto [i, t, h] = locate(x);
    const double d00 = 6 * t * (t - 1);
    const double d10 = (1 - t) * (1 - 3 * t);
    const double d01 = -d00;
    const double d11 = t * (3 * t - 2);
    return (d00 * ys_[i] + d01 * ys_[i + 1]) / h + d10 * slopes_[i] +
           d11 * slopes_[i + 1];
  }

 private:
  struct Cell {
    size_t i;
    double t;
    double h;
  };
  Cell locate(double x) const {
    if (x < xs_.front() || x > xs_.back())
      throw std::out_of_range("MonotoneCubicTable: x outside table");
    size_t i =
        static_cast<size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) -
                            xs_.begin());
    i = std::min(std::max<size_t>(i, 1), xs_.size() - 1) - 1;
    const double h = xs_[i + 1] - xs_[i];
    return {i, (x - xs_[i]) / h, h};
  }

  std::vector<double> xs_, ys_, slopes_;
};

}  // namespace matchctl
