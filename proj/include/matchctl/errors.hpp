#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace matchctl {

/// A point was evaluated outside the declared validity region of a system.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// A metric (or other matrix) that must be invertible was singular.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Newton failed to converge or jumped off the selected kinematic branch.
class KinematicBranchError : public std::runtime_error {
 public:
  explicit KinematicBranchError(const std::string& what)
      : std::runtime_error(what) {}
};

/// A tuning function violates its requirements (e.g. mu1' vanishing).
class TuningError : public std::runtime_error {
 public:
  explicit TuningError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear feedback violates the actuation constraint P g^{-1} u = 0.
class AdmissibilityError : public std::runtime_error {
 public:
  explicit AdmissibilityError(const std::string& what)
      : std::runtime_error(what) {}
};

/// The nondegenerate-solution sweep of the symmetry-equation solver failed.
/// Carries the solution-space basis for diagnosis (should not occur: a
/// nondegenerate symmetric solution always exists).
class NondegenerateSearchError : public std::runtime_error {
 public:
  NondegenerateSearchError(const std::string& what, Eigen::MatrixXd basis)
      : std::runtime_error(what), solution_space_basis(std::move(basis)) {}

  /// Columns are vectorized symmetric solutions of R X - X R^T = 0.
  Eigen::MatrixXd solution_space_basis;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace matchctl
