#pragma once

#include <cstddef>
#include <span>

#include "gazescreen/matrix.hpp"

namespace gazescreen {

/// exp(-gamma |a - b|^2).
double rbf(const double* a, const double* b, Eigen::Index d, double gamma);

/// K(A_i, B_j) for all rows of A and B.
Matrix rbf_matrix(const Matrix& A, const Matrix& B, double gamma);

/// Box-constrained dual with one equality constraint,
///
///   min 0.5 a'Qa + p'a   s.t.  y'a = const,  0 <= a_i <= upper_i,
///
/// with Q_ij = y_i y_j K(x_i, x_j) and an RBF kernel. The starting point
/// must be feasible; the equality constraint is kept by every step.
struct SmoProblem {
  const Matrix* X = nullptr;
  double gamma = 1.0;
  std::span<const double> p;
  std::span<const signed char> y;  // +1 / -1
  std::span<const double> upper;
  Vector alpha0;
};

struct SmoOptions {
  double tol = 1e-3;
  std::size_t max_iter = 10'000'000;
  double cache_mb = 256.0;
};

struct SmoResult {
  Vector alpha;
  Vector grad;  // Q alpha + p
  double rho = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Pairwise (SMO) solver with second-order working-set selection. The
/// decision function is sum_i alpha_i y_i K(x_i, x) - rho.
SmoResult solve_smo(const SmoProblem& problem, const SmoOptions& options = {});

/// Maximal violating-pair gap m(a) - M(a); the solver stops once it is below tol.
double smo_violation(std::span<const signed char> y, std::span<const double> upper, const Vector& alpha,
                     const Vector& grad);

}  // namespace gazescreen
