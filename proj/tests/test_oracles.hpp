#pragma once

// Test-only oracles, kept independent of the library code paths they check.

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "matchctl/ballbeam.hpp"
#include "matchctl/geometry.hpp"

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Bisection solve of the rescaled kinematic constraint, independent of the
/// model's Newton/continuation path.
inline double alpha_bisection(double a1, double a2, double theta) {
  const auto F = [&](double al) {
    const double A = (1 - std::cos(al)) - a2 * (1 - std::cos(theta));
    const double B = std::sin(al) + a1 - a2 * std::sin(theta);
    return A * A + B * B - a1 * a1;
  };
  double lo = a2 * theta - 0.06, hi = a2 * theta + 0.06;
  double flo = F(lo), fhi = F(hi);
  if (flo * fhi > 0) throw std::runtime_error("alpha_bisection: no bracket");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = F(mid);
    if (fm == 0.0) return mid;
    if (flo * fm < 0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return 0.5 * (lo + hi);
}

/// Nullspace dimension of X -> R X - X R^T over symmetric X via the full
/// n^2 Kronecker vectorization (a different route than the library's
/// packed-symmetric map): rows are vec(R X - X R^T) = (I (x) R - R (x) I)
/// vec(X) plus the symmetry constraints vec(X - X^T) = 0.
inline int lemma1_nullspace_dim_bruteforce(const MatrixXd& R) {
  const int n = static_cast<int>(R.rows());
  const int n2 = n * n;
  MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd K(n2 + n2, n2);
  // kron(I, R) - kron(R, I) acting on column-major vec(X).
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l)
        for (int k = 0; k < n; ++k) {
          // (R X)(k, j) uses X(l, j); (X R^T)(k, j) uses X(k, l).
          K(j * n + k, j * n + l) += (l == k ? 0.0 : 0.0);
        }
  K.setZero();
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const int row = j * n + k;
      for (int l = 0; l < n; ++l) {
        K(row, j * n + l) += R(k, l);   // (R X)(k, j)
        K(row, l * n + k) -= R(j, l);   // (X R^T)(k, j) = X(k, l) R(j, l)
      }
    }
  // symmetry rows: X(i, j) - X(j, i) = 0
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int row = n2 + j * n + i;
      K(row, j * n + i) += 1.0;
      K(row, i * n + j) -= 1.0;
    }
  Eigen::JacobiSVD<MatrixXd> svd(K);
  const auto& sv = svd.singularValues();
  const double thresh = 1e-10 * std::max(1.0, sv.size() ? sv[0] : 0.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  return n2 - rank;
}

/// A smooth analytic 2D metric family with hand-coded partials, positive
/// definite for |q| not too large: g = diag(c0 + q0^2, c1 + q1^2) + eps
/// off-diagonal coupling sin(q0 q1).
struct AnalyticMetric2 {
  double c0 = 2.0, c1 = 3.0, eps = 0.3;

  matchctl::MetricField field() const {
    const double c0v = c0, c1v = c1, e = eps;
    return matchctl::MetricField::analytic(
        [c0v, c1v, e](const VectorXd& q) {
          MatrixXd g(2, 2);
          g(0, 0) = c0v + q[0] * q[0];
          g(1, 1) = c1v + q[1] * q[1];
          g(0, 1) = g(1, 0) = e * std::sin(q[0] * q[1]);
          return g;
        },
        [e](const VectorXd& q) {
          matchctl::Tensor3 T(2);
          const double c = std::cos(q[0] * q[1]);
          T(0, 0, 0) = 2 * q[0];
          T(0, 0, 1) = T(0, 1, 0) = e * c * q[1];
          T(1, 1, 1) = 2 * q[1];
          T(1, 0, 1) = T(1, 1, 0) = e * c * q[0];
          return T;
        });
  }
};

/// Polar-style metric diag(1, q0^2) (singular at q0 = 0; evaluate away).
inline matchctl::MetricField polar_metric() {
  return matchctl::MetricField::analytic(
      [](const VectorXd& q) {
        MatrixXd g = MatrixXd::Zero(2, 2);
        g(0, 0) = 1.0;
        g(1, 1) = q[0] * q[0];
        return g;
      },
      [](const VectorXd& q) {
        matchctl::Tensor3 T(2);
        T(0, 1, 1) = 2.0 * q[0];
        return T;
      });
}

/// Exact solution of qddot = -w^2 q - 2 z w qdot (underdamped z < 1).
struct DampedOscillator {
  double w = 2.0, z = 0.25;

  void exact(double q0, double v0, double t, double* q, double* v) const {
    const double wd = w * std::sqrt(1 - z * z);
    const double a = q0;
    const double b = (v0 + z * w * q0) / wd;
    const double e = std::exp(-z * w * t);
    *q = e * (a * std::cos(wd * t) + b * std::sin(wd * t));
    *v = e * ((-a * wd * std::sin(wd * t) + b * wd * std::cos(wd * t)) -
              z * w * (a * std::cos(wd * t) + b * std::sin(wd * t)));
  }

  matchctl::LagrangianSystem system() const {
    matchctl::LagrangianSystem sys;
    sys.dim = 1;
    sys.metric = matchctl::MetricField::constant(MatrixXd::Identity(1, 1));
    const double w2 = w * w;
    sys.potential = matchctl::ScalarField::analytic(
        [w2](const VectorXd& q) { return 0.5 * w2 * q[0] * q[0]; },
        [w2](const VectorXd& q) { return (w2 * q).eval(); });
    const double d = 2 * z * w;
    sys.dissipation = matchctl::DissipationField::linear(
        MatrixXd::Constant(1, 1, d));
    sys.projection =
        matchctl::ProjectionField::constant(MatrixXd::Zero(1, 1), 0);
    sys.domain = matchctl::Box::unbounded(1);
    return sys;
  }
};

/// The physical-unit (SI) ball-beam plant assembled directly from the
/// parameter sheet: coordinates (s [m], theta [rad]).
inline matchctl::LagrangianSystem physical_ballbeam(
    const matchctl::ballbeam::PhysicalParams& p,
    std::shared_ptr<const matchctl::ballbeam::BallBeamModel> kin) {
  using matchctl::Tensor3;
  matchctl::LagrangianSystem sys;
  sys.dim = 2;
  const double IB = p.I_B, Ib = p.I_b, Is = p.I_s, rB = p.r_B;
  const double mB = p.m_B, mb = p.m_b, ml = p.m_l, g0 = p.grav;
  const double lb = p.l_b, rg = p.r_g;
  sys.metric = matchctl::MetricField::analytic(
      [=](const VectorXd& q) {
        const auto k = kin->alpha_derivatives(q[1]);
        MatrixXd g(2, 2);
        g(0, 0) = IB / (rB * rB);
        g(0, 1) = g(1, 0) = (IB / rB) * k.d1;
        g(1, 1) = Is + (Ib + IB + mB * q[0] * q[0]) * k.d1 * k.d1;
        return g;
      },
      [=](const VectorXd& q) {
        const auto k = kin->alpha_derivatives(q[1]);
        Tensor3 T(2);
        T(0, 1, 1) = 2.0 * mB * q[0] * k.d1 * k.d1;
        T(1, 0, 1) = T(1, 1, 0) = (IB / rB) * k.d2;
        T(1, 1, 1) = (Ib + IB + mB * q[0] * q[0]) * 2.0 * k.d1 * k.d2;
        return T;
      });
  sys.potential = matchctl::ScalarField::analytic(
      [=](const VectorXd& q) {
        const auto k = kin->alpha_derivatives(q[1]);
        return 0.5 * ml * g0 * rg * std::sin(q[1]) +
               0.5 * (mb + ml) * g0 * lb * std::sin(k.alpha) +
               mB * g0 * q[0] * std::sin(k.alpha);
      },
      [=](const VectorXd& q) {
        const auto k = kin->alpha_derivatives(q[1]);
        const double cosa = std::cos(k.alpha);
        return Eigen::Vector2d(
                   mB * g0 * std::sin(k.alpha),
                   0.5 * ml * g0 * rg * std::cos(q[1]) +
                       (0.5 * (mb + ml) * g0 * lb + mB * g0 * q[0]) * cosa *
                           k.d1)
            .eval();
      });
  const double c0 = p.c0;
  sys.dissipation = matchctl::DissipationField{
      [c0](const VectorXd&, const VectorXd& qdot) {
        return Eigen::Vector2d(0.0, c0 * qdot[1]).eval();
      },
      true};
  sys.projection = matchctl::ProjectionField::with_fd(
      [=](const VectorXd& q) {
        const auto k = kin->alpha_derivatives(q[1]);
        MatrixXd P = MatrixXd::Zero(2, 2);
        P(0, 0) = 1.0;
        P(0, 1) = rB * k.d1;  // g12/g11 in SI coordinates
        return P;
      },
      1);
  matchctl::Box dom;
  dom.lo = Eigen::Vector2d(2.0 * rB, -0.6);
  dom.hi = Eigen::Vector2d(41.0 * rB, 0.6);
  sys.domain = dom;
  return sys;
}

inline std::vector<VectorXd> sample_box(const matchctl::Box& box, int count,
                                        uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VectorXd> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(box.sample(rng));
  return out;
}

}  // namespace testutil
