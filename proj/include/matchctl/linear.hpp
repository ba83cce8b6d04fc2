#pragma once

#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "matchctl/matching.hpp"

namespace matchctl {

// ---------------------------------------------------------------------------
// Constant-coefficient mechanical systems and linear state feedback.
// Conventions: V(q) = 1/2 q^T V2 q + v1^T q with V2 symmetric, so the
// gradient is V2 q + v1; dissipation C(qdot) = C2 qdot.
// ---------------------------------------------------------------------------

struct LTISystem {
  MatrixXd g;    // symmetric positive definite
  MatrixXd V2;   // symmetric
  VectorXd v1;
  MatrixXd C2;
  MatrixXd P;    // constant g-orthogonal projection
  int n_u = 0;

  int dim() const { return static_cast<int>(g.rows()); }

  void validate() const {
    const int n = dim();
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + g.norm()))
      throw std::invalid_argument("LTISystem: g must be symmetric");
    if (Eigen::LLT<MatrixXd>(g).info() != Eigen::Success)
      throw std::invalid_argument("LTISystem: g must be positive definite");
    if ((V2 - V2.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + V2.norm()))
      throw std::invalid_argument("LTISystem: V2 must be symmetric");
    const MatrixXd gi = g.llt().solve(MatrixXd::Identity(n, n));
    if ((P * P - P).norm() > 1e-10 * (1 + P.norm()) ||
        (P * gi - gi * P.transpose()).norm() > 1e-10 * (1 + gi.norm()))
      throw std::invalid_argument(
          "LTISystem: P must be an idempotent g-self-adjoint projection");
    if (Eigen::FullPivLU<MatrixXd>(P).rank() != n_u)
      throw std::invalid_argument("LTISystem: rank(P) != n_u");
  }
};

struct LinearFeedback {
  VectorXd v;
  MatrixXd a;
  MatrixXd b;
};

struct ConstantClosedLoop {
  MatrixXd g_hat;   // symmetric, nondegenerate (definiteness reported only)
  MatrixXd V2_hat;  // symmetric
  MatrixXd C2_hat;
  bool g_hat_positive_definite = false;
};

/// Largest violation of P g^{-1} v = 0, P g^{-1} a = 0, P g^{-1} b = 0.
inline double admissibility_defect(const LTISystem& sys,
                                   const LinearFeedback& fb) {
  const MatrixXd Pg = sys.P * sys.g.fullPivLu().inverse();
  double worst = (Pg * fb.v).cwiseAbs().maxCoeff();
  worst = std::max(worst, (Pg * fb.a).cwiseAbs().maxCoeff());
  worst = std::max(worst, (Pg * fb.b).cwiseAbs().maxCoeff());
  return worst;
}

inline void require_admissible(const LTISystem& sys, const LinearFeedback& fb,
                               double tol = 1e-9) {
  const double d = admissibility_defect(sys, fb);
  if (d > tol)
    throw AdmissibilityError(
        "feedback violates P g^{-1} u = 0 (defect " + std::to_string(d) + ")");
}

// ---------------------------------------------------------------------------
// Symmetric solutions of R X - X^T R^T = 0 (nondegenerate).
// ---------------------------------------------------------------------------

struct Lemma1Result {
  MatrixXd X;              // symmetric, ||X||_F = sqrt(n), sigma-ratio bounded
  int solution_space_dim = 0;
  double residual = 0.0;   // ||R X - X R^T||_F
  double sigma_ratio = 0.0;  // sigma_min(X) / sigma_max(X)
};

namespace detail {

/// Orthonormal basis of the symmetric n x n matrices, row-major packing.
inline MatrixXd sym_to_mat(const VectorXd& x, int n) {
  MatrixXd X(n, n);
  int idx = 0;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      if (i == j) {
        X(i, i) = x[idx];
      } else {
        X(i, j) = X(j, i) = x[idx] * inv_sqrt2;
      }
      ++idx;
    }
  return X;
}

inline VectorXd mat_to_sym(const MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  VectorXd x(n * (n + 1) / 2);
  int idx = 0;
  const double sqrt2 = std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      x[idx++] = (i == j) ? X(i, i) : X(i, j) * sqrt2;
  return x;
}

/// Halton low-discrepancy sequence mapped to [-1, 1].
inline double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  int i = index;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return 2.0 * r - 1.0;
}

inline constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                  37, 41, 43, 47, 53, 59, 61, 67, 71, 73};

}  // namespace detail

/// Finds a symmetric nondegenerate X with R X = X R^T. Works over the
/// n(n+1)/2-dimensional symmetric space: builds the linear map
/// X -> R X - X R^T (antisymmetric-valued), extracts its nullspace by SVD
/// thresholding, then sweeps deterministic basis combinations (projection of
/// the identity first, then Halton points) until sigma_min/sigma_max exceeds
/// 1e-8. The result is scaled to ||X||_F = sqrt(n).
inline Lemma1Result lemma1_solve(const MatrixXd& R) {
  const int n = static_cast<int>(R.rows());
  const int ns = n * (n + 1) / 2;
  const int na = n * (n - 1) / 2;

  Lemma1Result out;
  if (n == 1) {
    out.X = MatrixXd::Constant(1, 1, 1.0);
    out.solution_space_dim = 1;
    out.sigma_ratio = 1.0;
    return out;
  }

  // Rows: independent entries (i < j) of the antisymmetric image.
  MatrixXd L(std::max(na, 1), ns);
  for (int c = 0; c < ns; ++c) {
    VectorXd e = VectorXd::Zero(ns);
    e[c] = 1.0;
    const MatrixXd X = detail::sym_to_mat(e, n);
    const MatrixXd A = R * X - X * R.transpose();
    int row = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) L(row++, c) = A(i, j);
  }

  Eigen::JacobiSVD<MatrixXd> svd(L, Eigen::ComputeFullV);
  const VectorXd sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  const double thresh = 1e-10 * std::max(smax, 1.0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  const int dim = ns - rank;
  const MatrixXd basis = svd.matrixV().rightCols(dim);
  out.solution_space_dim = dim;

  const auto evaluate = [&](const VectorXd& coeffs) {
    VectorXd x = basis * coeffs;
    const double nrm = x.norm();
    if (nrm < 1e-14) return std::make_pair(MatrixXd(), 0.0);
    MatrixXd X = detail::sym_to_mat(x, n);
    X *= std::sqrt(double(n)) / X.norm();
    Eigen::JacobiSVD<MatrixXd> xs(X);
    const double ratio =
        xs.singularValues()(xs.singularValues().size() - 1) /
        xs.singularValues()(0);
    return std::make_pair(X, ratio);
  };

  // Deterministic sweep: identity projection first, then basis directions,
  // then Halton combinations.
  std::vector<VectorXd> candidates;
  candidates.push_back(basis.transpose() *
                       detail::mat_to_sym(MatrixXd::Identity(n, n)));
  for (int c = 0; c < dim; ++c)
    candidates.push_back(VectorXd::Unit(dim, c));
  for (int it = 1; it <= 512; ++it) {
    VectorXd coeffs(dim);
    for (int c = 0; c < dim; ++c)
      coeffs[c] = detail::halton(
          it, detail::kPrimes[c % (sizeof(detail::kPrimes) / sizeof(int))]);
    candidates.push_back(coeffs);
  }

  MatrixXd best;
  double best_ratio = -1.0;
  for (const auto& coeffs : candidates) {
    const auto [X, ratio] = evaluate(coeffs);
    if (X.size() == 0) continue;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = X;
    }
    if (ratio > 1e-8) break;
  }
  if (best_ratio <= 1e-8)
    throw NondegenerateSearchError(
        "lemma1_solve: no nondegenerate element found in the solution space",
        basis);

  out.X = 0.5 * (best + best.transpose());
  out.residual = (R * out.X - out.X * R.transpose()).norm();
  out.sigma_ratio = best_ratio;
  return out;
}

// ---------------------------------------------------------------------------
// Jordan-form construction, used as a small-n oracle for lemma1_solve.
// ---------------------------------------------------------------------------

struct JordanOracleResult {
  MatrixXd X;
  int expected_solution_dim = 0;  // meaningful for diagonalizable inputs
};

/// Builds X = Q Y Q^T from the real canonical structure of R: blockwise
/// Y = 1 for a real eigenvalue, the 2x2 antidiagonal for a complex pair,
/// and the full anti-identity for a single real Jordan block. Returns
/// nothing when the structure is ambiguous at tolerance 1e-8 or the
/// transformation is ill-conditioned (Jordan forms are numerically
/// unstable, so the oracle declines rather than guesses).
inline std::optional<JordanOracleResult> jordan_oracle(const MatrixXd& R,
                                                       double tol = 1e-8) {
  const int n = static_cast<int>(R.rows());
  if (n > 4) return std::nullopt;
  if (n == 1) return JordanOracleResult{MatrixXd::Identity(1, 1), 1};

  const double scale = std::max(1.0, R.norm());
  Eigen::EigenSolver<MatrixXd> es(R);
  if (es.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXcd ev = es.eigenvalues();

  bool distinct = true;
  for (int i = 0; i < n && distinct; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(ev[i] - ev[j]) < tol * scale) {
        distinct = false;
        break;
      }

  if (distinct) {
    // Real block-diagonalization: real eigenvectors, or (Re v, Im v) pairs.
    MatrixXd Q(n, n);
    MatrixXd Y = MatrixXd::Zero(n, n);
    std::vector<bool> used(n, false);
    int col = 0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = true;
      if (std::abs(ev[i].imag()) < tol * scale) {
        Q.col(col) = es.eigenvectors().col(i).real();
        Y(col, col) = 1.0;
        col += 1;
      } else {
        int j = -1;
        for (int k = i + 1; k < n; ++k)
          if (!used[k] && std::abs(ev[k] - std::conj(ev[i])) < tol * scale) {
            j = k;
            break;
          }
        if (j < 0) return std::nullopt;
        used[j] = true;
        Q.col(col) = es.eigenvectors().col(i).real();
        Q.col(col + 1) = es.eigenvectors().col(i).imag();
        Y(col, col + 1) = 1.0;
        Y(col + 1, col) = 1.0;
        col += 2;
      }
    }
    if (col != n) return std::nullopt;
    Eigen::JacobiSVD<MatrixXd> qs(Q);
    const double cond = qs.singularValues()(0) /
                        qs.singularValues()(qs.singularValues().size() - 1);
    if (!std::isfinite(cond) || cond > 1e8) return std::nullopt;
    JordanOracleResult res;
    res.X = Q * Y * Q.transpose();
    res.X = 0.5 * (res.X + res.X.transpose());
    res.X *= std::sqrt(double(n)) / res.X.norm();
    res.expected_solution_dim = n;
    return res;
  }

  // Single real Jordan block: one eigenvalue, geometric multiplicity 1.
  const std::complex<double> mean = ev.mean();
  if (std::abs(mean.imag()) > tol * scale) return std::nullopt;
  for (int i = 0; i < n; ++i)
    if (std::abs(ev[i] - mean) > 1e-4 * scale) return std::nullopt;
  const double lambda = mean.real();
  const MatrixXd N = R - lambda * MatrixXd::Identity(n, n);
  MatrixXd Nk = MatrixXd::Identity(n, n);
  for (int k = 0; k < n; ++k) Nk = Nk * N;
  if (Nk.norm() > 1e-6 * scale) return std::nullopt;
  // Jordan chain seeded by the axis maximizing |N^{n-1} e|.
  MatrixXd Nn1 = MatrixXd::Identity(n, n);
  for (int k = 0; k + 1 < n; ++k) Nn1 = Nn1 * N;
  int seed = 0;
  Nn1.colwise().norm().maxCoeff(&seed);
  VectorXd v = VectorXd::Unit(n, seed);
  MatrixXd Q(n, n);
  for (int k = 0; k < n; ++k) {
    VectorXd w = v;
    for (int p = 0; p < n - 1 - k; ++p) w = N * w;
    Q.col(k) = w;
  }
  Eigen::JacobiSVD<MatrixXd> qs(Q);
  const double cond = qs.singularValues()(0) /
                      qs.singularValues()(qs.singularValues().size() - 1);
  if (!std::isfinite(cond) || cond > 1e8) return std::nullopt;
  MatrixXd Y = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) Y(i, n - 1 - i) = 1.0;
  JordanOracleResult res;
  res.X = Q * Y * Q.transpose();
  res.X = 0.5 * (res.X + res.X.transpose());
  res.X *= std::sqrt(double(n)) / res.X.norm();
  res.expected_solution_dim = n;
  return res;
}

// ---------------------------------------------------------------------------
// Theorem-2 construction: constant closed-loop data matching a given
// admissible linear feedback.
// ---------------------------------------------------------------------------

/// With M = g^{-1}(V2 - a): g_hat solves g_hat M = M^T g_hat (symmetric
/// nondegenerate, via lemma1_solve on R = M^T), then
/// V2_hat = g_hat g^{-1} (V2 - a) and C2_hat = g_hat g^{-1} (C2 - b).
/// Requires fb admissible and fb.v = v1 (the closed loop has a purely
/// quadratic potential, so its equilibrium sits at the origin only when the
/// constant feedback term cancels the linear potential gradient there).
inline ConstantClosedLoop theorem2_match(const LTISystem& sys,
                                         const LinearFeedback& fb,
                                         double tol = 1e-9) {
  require_admissible(sys, fb, tol);
  if ((fb.v - sys.v1).cwiseAbs().maxCoeff() >
      tol * (1.0 + sys.v1.cwiseAbs().maxCoeff()))
    throw AdmissibilityError(
        "theorem2_match: feedback constant must equal the linear potential "
        "term (closed-loop equilibrium at the origin)");

  const int n = sys.dim();
  const MatrixXd gi = sys.g.llt().solve(MatrixXd::Identity(n, n));
  const MatrixXd M = gi * (sys.V2 - fb.a);
  const Lemma1Result lem = lemma1_solve(M.transpose());

  ConstantClosedLoop out;
  out.g_hat = lem.X;
  out.V2_hat = out.g_hat * M;
  out.V2_hat = 0.5 * (out.V2_hat + out.V2_hat.transpose());
  out.C2_hat = out.g_hat * gi * (sys.C2 - fb.b);
  out.g_hat_positive_definite =
      Eigen::LLT<MatrixXd>(out.g_hat).info() == Eigen::Success;
  return out;
}

/// Largest violation of the constant matching conditions
/// P(g^{-1} V2 - ghat^{-1} V2_hat) and the dissipative analogue.
inline double constant_matching_defect(const LTISystem& sys,
                                       const ConstantClosedLoop& cl) {
  const int n = sys.dim();
  const MatrixXd gi = sys.g.llt().solve(MatrixXd::Identity(n, n));
  const MatrixXd ghi = cl.g_hat.fullPivLu().inverse();
  const double pot =
      (sys.P * (gi * sys.V2 - ghi * cl.V2_hat)).cwiseAbs().maxCoeff();
  const double dis =
      (sys.P * (gi * sys.C2 - ghi * cl.C2_hat)).cwiseAbs().maxCoeff();
  return std::max(pot, dis);
}

// ---------------------------------------------------------------------------
// Bridges into the field-based machinery.
// ---------------------------------------------------------------------------

inline LagrangianSystem to_lagrangian(const LTISystem& sys) {
  const int n = sys.dim();
  LagrangianSystem out;
  out.dim = n;
  out.metric = MetricField::constant(sys.g);
  const MatrixXd V2 = sys.V2;
  const VectorXd v1 = sys.v1;
  out.potential = ScalarField::analytic(
      [V2, v1](const VectorXd& q) { return 0.5 * q.dot(V2 * q) + v1.dot(q); },
      [V2, v1](const VectorXd& q) { return (V2 * q + v1).eval(); });
  out.dissipation = DissipationField::linear(sys.C2);
  out.projection = ProjectionField::constant(sys.P, sys.n_u);
  out.domain = Box::unbounded(n);
  return out;
}

inline ClosedLoopSpec to_closed_loop(const LTISystem& sys,
                                     const ConstantClosedLoop& cl) {
  ClosedLoopSpec out;
  out.dim = sys.dim();
  out.metric_hat = MetricField::constant(cl.g_hat);
  const MatrixXd V2h = cl.V2_hat;
  out.potential_hat = ScalarField::analytic(
      [V2h](const VectorXd& q) { return 0.5 * q.dot(V2h * q); },
      [V2h](const VectorXd& q) { return (V2h * q).eval(); });
  out.dissipation_hat = DissipationField::linear(cl.C2_hat);
  return out;
}

/// Deterministic random admissible instance for demos and property tests.
/// The feedback constant is set to v1 (see theorem2_match) and (v1, a, b)
/// are projected onto the admissible subspace by u -> (I - g P g^{-1}) u.
struct LinearInstance {
  LTISystem sys;
  LinearFeedback fb;
};

inline LinearInstance make_random_admissible_instance(int n, int n_u,
                                                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const auto rand_mat = [&](int r, int c) {
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = uni(rng);
    return m;
  };

  LinearInstance out;
  MatrixXd A = rand_mat(n, n);
  out.sys.g = A * A.transpose() + double(n) * MatrixXd::Identity(n, n);
  MatrixXd Vr = rand_mat(n, n);
  out.sys.V2 = 0.5 * (Vr + Vr.transpose());
  out.sys.C2 = rand_mat(n, n);
  std::vector<int> unact(static_cast<size_t>(n_u));
  for (int i = 0; i < n_u; ++i) unact[static_cast<size_t>(i)] = i;
  out.sys.P = g_orthogonal_projector(out.sys.g, unact);
  out.sys.n_u = n_u;

  const MatrixXd gi =
      out.sys.g.llt().solve(MatrixXd::Identity(n, n));
  const MatrixXd admissible_proj =
      MatrixXd::Identity(n, n) - out.sys.g * out.sys.P * gi;
  out.sys.v1 = admissible_proj * rand_mat(n, 1);
  out.fb.v = out.sys.v1;
  out.fb.a = admissible_proj * rand_mat(n, n);
  out.fb.b = admissible_proj * rand_mat(n, n);
  out.sys.validate();
  return out;
}

}  // namespace matchctl
