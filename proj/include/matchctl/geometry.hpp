#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "matchctl/errors.hpp"
#include "matchctl/tensor3.hpp"

namespace matchctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Generalized position/velocity pair.
struct ConfigState {
  VectorXd q;
  VectorXd qdot;

  ConfigState() = default;
  ConfigState(VectorXd q_in, VectorXd qdot_in)
      : q(std::move(q_in)), qdot(std::move(qdot_in)) {
    if (q.size() < 1 || q.size() != qdot.size())
      throw std::invalid_argument("ConfigState: q and qdot must share dim >= 1");
  }
  int dim() const { return static_cast<int>(q.size()); }
};

/// Axis-aligned validity region for q.
struct Box {
  VectorXd lo, hi;

  static Box unbounded(int n) {
    Box b;
    b.lo = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    b.hi = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    return b;
  }

  bool contains(const VectorXd& q) const {
    for (int k = 0; k < q.size(); ++k)
      if (!(q[k] >= lo[k] && q[k] <= hi[k])) return false;
    return true;
  }

  void require(const VectorXd& q, const char* who) const {
    if (!contains(q))
      throw DomainError(std::string(who) + ": point outside declared domain");
  }

  VectorXd sample(std::mt19937_64& rng) const {
    VectorXd q(lo.size());
    for (int k = 0; k < lo.size(); ++k) {
      std::uniform_real_distribution<double> u(lo[k], hi[k]);
      q[k] = u(rng);
    }
    return q;
  }
};

// ---------------------------------------------------------------------------
// Central differences with one Richardson refinement. Used as the fallback
// when analytic partials are absent and as the universal test oracle.
// Step per axis: step * max(1, |q_k|). Near a domain boundary the step is
// halved once; if still outside, a DomainError is raised.
// ---------------------------------------------------------------------------

namespace detail {

inline double axis_step(double step, double qk) {
  return step * std::max(1.0, std::abs(qk));
}

template <class F>
auto central_diff(const F& f, const VectorXd& q, int k, double h)
    -> decltype(f(q)) {
  VectorXd qp = q, qm = q;
  qp[k] += h;
  qm[k] -= h;
  return (f(qp) - f(qm)) / (2.0 * h);
}

template <class F>
auto richardson_axis(const F& f, const VectorXd& q, int k, double h,
                     const Box* domain) -> decltype(f(q)) {
  if (domain) {
    VectorXd qp = q, qm = q;
    qp[k] += h;
    qm[k] -= h;
    if (!domain->contains(qp) || !domain->contains(qm)) {
      h *= 0.5;
      qp = q;
      qm = q;
      qp[k] += h;
      qm[k] -= h;
      if (!domain->contains(qp) || !domain->contains(qm))
        throw DomainError("fd_partials: stencil leaves the domain");
    }
  }
  const auto d1 = central_diff(f, q, k, h);
  const auto d2 = central_diff(f, q, k, 0.5 * h);
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace detail

/// Partials of a scalar field: gradient vector.
inline VectorXd fd_partials(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& q, double step = 1e-5,
                            const Box* domain = nullptr) {
  VectorXd g(q.size());
  for (int k = 0; k < q.size(); ++k)
    g[k] = detail::richardson_axis(f, q, k, detail::axis_step(step, q[k]),
                                   domain);
  return g;
}

/// Partials of a vector field: rows index the field component, columns the
/// differentiation axis (Jacobian).
inline MatrixXd fd_partials(const std::function<VectorXd(const VectorXd&)>& f,
                            const VectorXd& q, double step = 1e-5,
                            const Box* domain = nullptr) {
  const int n = static_cast<int>(q.size());
  MatrixXd J;
  for (int k = 0; k < n; ++k) {
    VectorXd col = detail::richardson_axis(f, q, k,
                                           detail::axis_step(step, q[k]),
                                           domain);
    if (J.size() == 0) J.resize(col.size(), n);
    J.col(k) = col;
  }
  return J;
}

/// Partials of a matrix field: T(k, i, j) = d M_ij / d q^k.
inline Tensor3 fd_partials(const std::function<MatrixXd(const VectorXd&)>& f,
                           const VectorXd& q, double step = 1e-5,
                           const Box* domain = nullptr) {
  const int n = static_cast<int>(q.size());
  Tensor3 T(n);
  for (int k = 0; k < n; ++k) {
    MatrixXd D = detail::richardson_axis(f, q, k,
                                         detail::axis_step(step, q[k]),
                                         domain);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) T(k, i, j) = D(i, j);
  }
  return T;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Scalar field with gradient (analytic if supplied, else central-difference).
struct ScalarField {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  bool analytic_gradient = false;

  static ScalarField analytic(std::function<double(const VectorXd&)> v,
                              std::function<VectorXd(const VectorXd&)> grad) {
    return {std::move(v), std::move(grad), true};
  }
  static ScalarField with_fd(std::function<double(const VectorXd&)> v,
                             double step = 1e-5) {
    ScalarField f;
    f.value = v;
    f.gradient = [v, step](const VectorXd& q) {
      return fd_partials(v, q, step);
    };
    f.analytic_gradient = false;
    return f;
  }
};

/// Symmetric positive-definite metric with partials T(k,i,j) = dg_ij/dq^k.
struct MetricField {
  std::function<MatrixXd(const VectorXd&)> value;
  std::function<Tensor3(const VectorXd&)> partials;
  bool analytic_partials = false;

  MatrixXd partial(const VectorXd& q, int k) const {
    const Tensor3 T = partials(q);
    const int n = T.dim();
    MatrixXd D(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) D(i, j) = T(k, i, j);
    return D;
  }

  static MetricField analytic(std::function<MatrixXd(const VectorXd&)> v,
                              std::function<Tensor3(const VectorXd&)> parts) {
    return {std::move(v), std::move(parts), true};
  }
  static MetricField with_fd(std::function<MatrixXd(const VectorXd&)> v,
                             double step = 1e-5) {
    MetricField f;
    f.value = v;
    f.partials = [v, step](const VectorXd& q) {
      return fd_partials(v, q, step);
    };
    f.analytic_partials = false;
    return f;
  }
  static MetricField constant(const MatrixXd& g) {
    const int n = static_cast<int>(g.rows());
    return analytic([g](const VectorXd&) { return g; },
                    [n](const VectorXd&) { return Tensor3(n); });
  }
};

/// Velocity-dependent dissipation covector C_r(q, qdot).
struct DissipationField {
  std::function<VectorXd(const VectorXd&, const VectorXd&)> value;
  bool odd_in_velocity = false;

  static DissipationField zero(int n) {
    return {[n](const VectorXd&, const VectorXd&) {
              return VectorXd::Zero(n).eval();
            },
            true};
  }
  static DissipationField linear(const MatrixXd& C2) {
    return {[C2](const VectorXd&, const VectorXd& qdot) {
              return (C2 * qdot).eval();
            },
            true};
  }
};

/// g-orthogonal projection P^i_j onto the unactuated directions.
struct ProjectionField {
  std::function<MatrixXd(const VectorXd&)> value;
  std::function<Tensor3(const VectorXd&)> partials;
  int rank = 0;

  static ProjectionField constant(const MatrixXd& P, int rank) {
    const int n = static_cast<int>(P.rows());
    ProjectionField f;
    f.value = [P](const VectorXd&) { return P; };
    f.partials = [n](const VectorXd&) { return Tensor3(n); };
    f.rank = rank;
    return f;
  }
  static ProjectionField analytic(std::function<MatrixXd(const VectorXd&)> v,
                                  std::function<Tensor3(const VectorXd&)> dp,
                                  int rank) {
    return {std::move(v), std::move(dp), rank};
  }
  static ProjectionField with_fd(std::function<MatrixXd(const VectorXd&)> v,
                                 int rank, double step = 1e-5) {
    ProjectionField f;
    f.value = v;
    f.partials = [v, step](const VectorXd& q) {
      return fd_partials(v, q, step);
    };
    f.rank = rank;
    return f;
  }
};

/// The g-orthogonal projector onto span{e_i : i unactuated} for a metric g:
/// P = E (E^T g E)^{-1} E^T g. Kernel is g^{-1} applied to the actuated
/// covector space, so P g^{-1} u = 0 for every admissible u.
inline MatrixXd g_orthogonal_projector(const MatrixXd& g,
                                       const std::vector<int>& unactuated) {
  const int n = static_cast<int>(g.rows());
  const int m = static_cast<int>(unactuated.size());
  MatrixXd E = MatrixXd::Zero(n, m);
  for (int c = 0; c < m; ++c) E(unactuated[c], c) = 1.0;
  const MatrixXd M = E.transpose() * g * E;
  return E * M.ldlt().solve(E.transpose() * g);
}

/// All open-loop data of an underactuated Lagrangian system.
struct LagrangianSystem {
  int dim = 0;
  MetricField metric;
  ScalarField potential;
  DissipationField dissipation;
  ProjectionField projection;
  Box domain;
};

// ---------------------------------------------------------------------------
// Christoffel symbols
// ---------------------------------------------------------------------------

/// First kind, layout G(i, j, k) = [jk, i]
///   = 1/2 (dg_ij/dq^k + dg_ki/dq^j - dg_jk/dq^i); symmetric in (j, k).
inline Tensor3 christoffel_first(const MetricField& metric, const VectorXd& q,
                                 const Box* domain = nullptr) {
  if (domain) domain->require(q, "christoffel_first");
  const Tensor3 dg = metric.partials(q);
  const int n = dg.dim();
  Tensor3 G(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        G(i, j, k) = 0.5 * (dg(k, i, j) + dg(j, k, i) - dg(i, j, k));
  return G;
}

/// Second kind, layout G(m, i, j) = Gamma^m_ij = g^{ml} [ij, l].
inline Tensor3 christoffel_second(const MetricField& metric, const VectorXd& q,
                                  const Box* domain = nullptr) {
  const Tensor3 first = christoffel_first(metric, q, domain);
  const MatrixXd g = metric.value(q);
  const int n = first.dim();
  Eigen::FullPivLU<MatrixXd> lu(g);
  if (!lu.isInvertible())
    throw SingularMatrixError("christoffel_second: singular metric");
  const MatrixXd gi = lu.inverse();
  Tensor3 G(n);
  for (int m = 0; m < n; ++m)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l) acc += gi(m, l) * first(l, i, j);
        G(m, i, j) = acc;
      }
  return G;
}

// ---------------------------------------------------------------------------
// Field validation (invariant checks at sampled points)
// ---------------------------------------------------------------------------

struct FieldCheck {
  bool ok = true;
  double worst = 0.0;
  std::string detail;
};

inline FieldCheck check_metric_spd(const MetricField& metric,
                                   const std::vector<VectorXd>& points) {
  FieldCheck r;
  for (const auto& q : points) {
    const MatrixXd g = metric.value(q);
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    r.worst = std::max(r.worst, asym);
    if (asym > 0.0) {
      r.ok = false;
      r.detail = "metric not symmetric";
      return r;
    }
    if (Eigen::LLT<MatrixXd>(g).info() != Eigen::Success) {
      r.ok = false;
      r.detail = "metric not positive definite";
      return r;
    }
  }
  return r;
}

inline FieldCheck check_gradient_consistency(
    const ScalarField& f, const std::vector<VectorXd>& points,
    double rel_tol = 1e-6) {
  FieldCheck r;
  for (const auto& q : points) {
    const VectorXd ga = f.gradient(q);
    const VectorXd gn = fd_partials(f.value, q);
    const double err =
        (ga - gn).cwiseAbs().maxCoeff() / (1.0 + gn.cwiseAbs().maxCoeff());
    r.worst = std::max(r.worst, err);
    if (err > rel_tol) {
      r.ok = false;
      r.detail = "gradient inconsistent with value under central differences";
    }
  }
  return r;
}

inline FieldCheck check_dissipation_odd(const DissipationField& c,
                                        const std::vector<VectorXd>& qs,
                                        const std::vector<VectorXd>& qdots,
                                        double tol = 1e-12) {
  FieldCheck r;
  for (size_t i = 0; i < qs.size(); ++i) {
    const VectorXd a = c.value(qs[i], qdots[i]);
    const VectorXd b = c.value(qs[i], (-qdots[i]).eval());
    const double err = (a + b).cwiseAbs().maxCoeff();
    r.worst = std::max(r.worst, err);
    if (err > tol * (1.0 + a.cwiseAbs().maxCoeff())) {
      r.ok = false;
      r.detail = "dissipation not odd in velocities";
    }
  }
  return r;
}

/// Idempotency, g-self-adjointness and rank of the projection at samples.
inline FieldCheck check_projection(const ProjectionField& proj,
                                   const MetricField& metric,
                                   const std::vector<VectorXd>& points) {
  FieldCheck r;
  for (const auto& q : points) {
    const MatrixXd P = proj.value(q);
    const MatrixXd g = metric.value(q);
    const MatrixXd gi = g.fullPivLu().inverse();
    const double idem = (P * P - P).norm();
    const double selfadj = (P * gi - gi * P.transpose()).norm();
    const double worst = std::max(idem / std::max(1.0, P.norm()),
                                  selfadj / std::max(1.0, gi.norm()));
    r.worst = std::max(r.worst, worst);
    if (worst > 1e-12) {
      r.ok = false;
      r.detail = "projection not idempotent / not g-self-adjoint";
      return r;
    }
    const int rank = Eigen::FullPivLU<MatrixXd>(P).rank();
    if (rank != proj.rank) {
      r.ok = false;
      r.detail = "projection rank mismatch";
      return r;
    }
  }
  return r;
}

}  // namespace matchctl
