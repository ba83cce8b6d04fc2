#pragma once

#include <utility>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "matchctl/geometry.hpp"

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

namespace matchctl {

/// Candidate closed-loop data (metric, potential, dissipation) whose
/// Euler-Lagrange system the control is meant to realize.
struct ClosedLoopSpec {
  int dim = 0;
  MetricField metric_hat;
  ScalarField potential_hat;
  DissipationField dissipation_hat;
};

/// Builds the trivial closed loop equal to the open-loop data.
inline ClosedLoopSpec closed_loop_from_open(const LagrangianSystem& open) {
  return {open.dim, open.metric, open.potential, open.dissipation};
}

namespace detail {

inline MatrixXd inverse_or_throw(const MatrixXd& m, const char* who) {
  Eigen::FullPivLU<MatrixXd> lu(m);
  if (!lu.isInvertible()) throw SingularMatrixError(who);
  return lu.inverse();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matching conditions. All three blocks are reported in the ambient index
// space (premultiplied by P); the first index therefore has rank n_u.
// ---------------------------------------------------------------------------

struct MatchingResidual {
  Tensor3 geodesic;      // (r, i, j): P^r_k (Gamma^k_ij - GammaHat^k_ij)
  VectorXd dissipative;  // (r):       P^r_k (g^{ki} C_i - gHat^{ki} CHat_i)
  VectorXd potential;    // (r):       P^r_k (g^{ki} dV_i - gHat^{ki} dVHat_i)
  struct Norms {
    double geodesic = 0.0;
    double dissipative = 0.0;
    double potential = 0.0;
    double max() const {
      return std::max(geodesic, std::max(dissipative, potential));
    }
  } norms;
};

inline MatchingResidual matching_residuals(const LagrangianSystem& open,
                                           const ClosedLoopSpec& closed,
                                           const VectorXd& q,
                                           const VectorXd& qdot) {
  const int n = open.dim;
  const MatrixXd P = open.projection.value(q);
  const MatrixXd gi =
      detail::inverse_or_throw(open.metric.value(q), "matching: singular g");
  const MatrixXd ghi = detail::inverse_or_throw(
      closed.metric_hat.value(q), "matching: singular ghat");

  const Tensor3 G = christoffel_second(open.metric, q);
  const Tensor3 Gh = christoffel_second(closed.metric_hat, q);

  MatchingResidual out;
  out.geodesic = Tensor3(n);
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += P(r, k) * (G(k, i, j) - Gh(k, i, j));
        out.geodesic(r, i, j) = acc;
      }

  const VectorXd C = open.dissipation.value(q, qdot);
  const VectorXd Ch = closed.dissipation_hat.value(q, qdot);
  out.dissipative = P * (gi * C - ghi * Ch);

  const VectorXd dV = open.potential.gradient(q);
  const VectorXd dVh = closed.potential_hat.gradient(q);
  out.potential = P * (gi * dV - ghi * dVh);

  out.norms.geodesic = out.geodesic.max_abs();
  out.norms.dissipative = out.dissipative.cwiseAbs().maxCoeff();
  out.norms.potential = out.potential.cwiseAbs().maxCoeff();
  return out;
}

/// lambda^k_i = g_ij ghat^{jk}, returned with L(i, k) = lambda^k_i, i.e.
/// L = g ghat^{-1}. Lowering with ghat recovers g: L * ghat = g.
inline MatrixXd lambda_tensor(const LagrangianSystem& open,
                              const ClosedLoopSpec& closed, const VectorXd& q) {
  const MatrixXd g = open.metric.value(q);
  const MatrixXd ghi = detail::inverse_or_throw(closed.metric_hat.value(q),
                                                "lambda_tensor: singular ghat");
  return g * ghi;
}

/// Partials of lambda by the product rule:
/// d(lambda)/dq^k = dg ghat^{-1} - g ghat^{-1} dghat ghat^{-1}.
inline Tensor3 lambda_partials(const LagrangianSystem& open,
                               const ClosedLoopSpec& closed,
                               const VectorXd& q) {
  const int n = open.dim;
  const MatrixXd ghi = detail::inverse_or_throw(
      closed.metric_hat.value(q), "lambda_partials: singular ghat");
  const MatrixXd lam = open.metric.value(q) * ghi;
  const Tensor3 dg = open.metric.partials(q);
  const Tensor3 dgh = closed.metric_hat.partials(q);
  Tensor3 out(n);
  for (int k = 0; k < n; ++k) {
    MatrixXd dgk(n, n), dghk(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        dgk(i, j) = dg(k, i, j);
        dghk(i, j) = dgh(k, i, j);
      }
    const MatrixXd d = dgk * ghi - lam * dghk * ghi;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(k, i, j) = d(i, j);
  }
  return out;
}

/// Residuals of the first-order lambda system equivalent (with symmetry and
/// invertibility of ghat) to the geodesic matching block. `lambda_system`
/// constrains the projected flow of lambda; `metric_transport` transports
/// ghat along it. Both vanish wherever the geodesic block vanishes on a
/// neighborhood.
struct LambdaPdeResiduals {
  Tensor3 lambda_system;    // (k, t, j)
  Tensor3 metric_transport; // (t, n, m)
  double lambda_norm = 0.0;
  double transport_norm = 0.0;
};

inline LambdaPdeResiduals lambda_pde_residuals(const LagrangianSystem& open,
                                               const ClosedLoopSpec& closed,
                                               const VectorXd& q) {
  const int n = open.dim;
  const MatrixXd g = open.metric.value(q);
  const MatrixXd gh = closed.metric_hat.value(q);
  const MatrixXd P = open.projection.value(q);
  const Tensor3 dg = open.metric.partials(q);
  const Tensor3 dgh = closed.metric_hat.partials(q);
  const Tensor3 dP = open.projection.partials(q);
  const MatrixXd lam = lambda_tensor(open, closed, q);
  const Tensor3 dlam = lambda_partials(open, closed, q);
  const Tensor3 first = christoffel_first(open.metric, q);

  LambdaPdeResiduals out;
  // lambda system: for all (k, t, j)
  //   P^s_k P^r_t ( g_ls dlam^l_r/dq^j + [lj,s] lam^l_r - [rj,l] lam^l_s
  //               + g_lr dlam^l_s/dq^j + [lj,r] lam^l_s - [sj,l] lam^l_r ) = 0
  // with lam(i, k) = lambda^k_i and dlam(j, i, k) = d lambda^k_i / dq^j.
  out.lambda_system = Tensor3(n);
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s)
          for (int r = 0; r < n; ++r) {
            double e = 0.0;
            for (int l = 0; l < n; ++l) {
              e += g(l, s) * dlam(j, r, l) + first(s, l, j) * lam(r, l) -
                   first(l, r, j) * lam(s, l) + g(l, r) * dlam(j, s, l) +
                   first(r, l, j) * lam(s, l) - first(l, s, j) * lam(r, l);
            }
            acc += P(s, k) * P(r, t) * e;
          }
        out.lambda_system(k, t, j) = acc;
      }

  // metric transport: for all (t, n, m)
  //   lam^l_r P^r_t dghat_nm/dq^l + ghat_ln d(lam^l_r P^r_t)/dq^m
  //     + ghat_lm d(lam^l_r P^r_t)/dq^n
  //   = P^l_t dg_nm/dq^l + g_ln dP^l_t/dq^m + g_lm dP^l_t/dq^n.
  // lamP(l, t) = lambda^l_r P^r_t; dlamP per axis by the product rule.
  MatrixXd lamP = lam.transpose() * P;
  std::vector<MatrixXd> dlamP(n);
  for (int a = 0; a < n; ++a) {
    MatrixXd dl(n, n), dp(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        dl(i, j) = dlam(a, i, j);
        dp(i, j) = dP(a, i, j);
      }
    dlamP[a] = dl.transpose() * P + lam.transpose() * dp;
  }
  out.metric_transport = Tensor3(n);
  for (int t = 0; t < n; ++t)
    for (int nn = 0; nn < n; ++nn)
      for (int m = 0; m < n; ++m) {
        double lhs = 0.0, rhs = 0.0;
        for (int l = 0; l < n; ++l) {
          lhs += lamP(l, t) * dgh(l, nn, m) + gh(l, nn) * dlamP[m](l, t) +
                 gh(l, m) * dlamP[nn](l, t);
          rhs += P(l, t) * dg(l, nn, m) + g(l, nn) * dP(m, l, t) +
                 g(l, m) * dP(nn, l, t);
        }
        out.metric_transport(t, nn, m) = lhs - rhs;
      }

  out.lambda_norm = out.lambda_system.max_abs();
  out.transport_norm = out.metric_transport.max_abs();
  return out;
}

/// Residuals of the two intermediate identities of the indicial derivation
/// (the projected dghat identity and the lambda-contracted one). Regression
/// hooks: both vanish wherever the geodesic matching block vanishes.
struct DerivationResiduals {
  Tensor3 projected_dghat;    // (t, i, j)
  Tensor3 lambda_contracted;  // (k, t, j)
};

inline DerivationResiduals derivation_residuals(const LagrangianSystem& open,
                                                const ClosedLoopSpec& closed,
                                                const VectorXd& q) {
  const int n = open.dim;
  const MatrixXd g = open.metric.value(q);
  const MatrixXd gh = closed.metric_hat.value(q);
  const MatrixXd P = open.projection.value(q);
  const Tensor3 dg = open.metric.partials(q);
  const Tensor3 dgh = closed.metric_hat.partials(q);
  const MatrixXd lam = lambda_tensor(open, closed, q);
  const Tensor3 dlam = lambda_partials(open, closed, q);

  DerivationResiduals out;
  // P^r_t ( lam^l_r dghat_ij/dq^l - lam^l_r dghat_li/dq^j
  //         - lam^l_r dghat_jl/dq^i )
  //   - P^r_t ( dg_ij/dq^r - dg_ri/dq^j - dg_jr/dq^i ) = 0.
  out.projected_dghat = Tensor3(n);
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) {
          double e = 0.0;
          for (int l = 0; l < n; ++l)
            e += lam(r, l) *
                 (dgh(l, i, j) - dgh(j, l, i) - dgh(i, j, l));
          e -= dg(r, i, j) - dg(j, r, i) - dg(i, j, r);
          acc += P(r, t) * e;
        }
        out.projected_dghat(t, i, j) = acc;
      }

  // P^s_k P^r_t ( g_ls dlam^l_r/dq^j + lam^l_r dg_js/dq^l
  //               - lam^i_s dg_ij/dq^r )
  //   = P^s_k P^r_t ( ghat_ij lam^l_r dlam^i_s/dq^l
  //                   - lam^i_s ghat_lj dlam^l_r/dq^i ).
  out.lambda_contracted = Tensor3(n);
  for (int k = 0; k < n; ++k)
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s)
          for (int r = 0; r < n; ++r) {
            double lhs = 0.0, rhs = 0.0;
            for (int l = 0; l < n; ++l)
              lhs += g(l, s) * dlam(j, r, l) + lam(r, l) * dg(l, j, s);
            for (int i = 0; i < n; ++i) lhs -= lam(s, i) * dg(r, i, j);
            for (int i = 0; i < n; ++i)
              for (int l = 0; l < n; ++l)
                rhs += gh(i, j) * lam(r, l) * dlam(l, s, i) -
                       lam(s, i) * gh(l, j) * dlam(i, r, l);
            acc += P(s, k) * P(r, t) * (lhs - rhs);
          }
        out.lambda_contracted(k, t, j) = acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Control law and closed-loop energy
// ---------------------------------------------------------------------------

/// The matching control
///   u_r = g_rk (Gamma^k_ij - GammaHat^k_ij) qdot^i qdot^j
///       + (C_r - g_rk ghat^{kl} CHat_l)
///       + g_rk (g^{ki} dV_i - ghat^{ki} dVHat_i).
/// The dissipative term carries the ghat-pullback so that the open loop
/// under u equals the closed-loop Euler-Lagrange system exactly and
/// P g^{-1} u = 0 wherever the matching conditions hold.
inline VectorXd control_law(const LagrangianSystem& open,
                            const ClosedLoopSpec& closed,
                            const ConfigState& state) {
  const VectorXd& q = state.q;
  const VectorXd& qd = state.qdot;
  const int n = open.dim;

  const MatrixXd g = open.metric.value(q);
  const MatrixXd gh = closed.metric_hat.value(q);
  const MatrixXd gi = detail::inverse_or_throw(g, "control_law: singular g");
  const MatrixXd ghi =
      detail::inverse_or_throw(gh, "control_law: singular ghat");

  const Tensor3 G = christoffel_second(open.metric, q);
  const Tensor3 Gh = christoffel_second(closed.metric_hat, q);
  VectorXd quad(n);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        acc += (G(k, i, j) - Gh(k, i, j)) * qd[i] * qd[j];
    quad[k] = acc;
  }

  const VectorXd C = open.dissipation.value(q, qd);
  const VectorXd Ch = closed.dissipation_hat.value(q, qd);
  const VectorXd dV = open.potential.gradient(q);
  const VectorXd dVh = closed.potential_hat.gradient(q);

  return g * quad + (C - g * (ghi * Ch)) + g * (gi * dV - ghi * dVh);
}

/// Closed-loop energy HHat = 1/2 ghat_ij qdot^i qdot^j + VHat and its rate
/// along matched trajectories, d/dt HHat = -CHat_j qdot^j.
struct EnergySample {
  double value = 0.0;
  double rate = 0.0;
};

inline EnergySample closed_loop_energy(const ClosedLoopSpec& closed,
                                       const ConfigState& state) {
  const MatrixXd gh = closed.metric_hat.value(state.q);
  const VectorXd Ch = closed.dissipation_hat.value(state.q, state.qdot);
  EnergySample e;
  e.value = 0.5 * state.qdot.dot(gh * state.qdot) +
            closed.potential_hat.value(state.q);
  e.rate = -Ch.dot(state.qdot);
  return e;
}

/// One grid point of a matching sweep, shaped for JSON export.
struct ResidualRecord {
  VectorXd q, qdot;
  double geodesic_norm = 0.0;
  double dissipative_norm = 0.0;
  double potential_norm = 0.0;
};

inline void to_json(nlohmann::json& j, const ResidualRecord& r) {
  j = nlohmann::json{
      {"q", std::vector<double>(r.q.data(), r.q.data() + r.q.size())},
      {"qdot",
       std::vector<double>(r.qdot.data(), r.qdot.data() + r.qdot.size())},
      {"geodesic_norm", r.geodesic_norm},
      {"dissipative_norm", r.dissipative_norm},
      {"potential_norm", r.potential_norm}};
}

}  // namespace matchctl
