#pragma once

#include <functional>

#include "gazescreen/matrix.hpp"

namespace gazescreen {

/// Returns f(x) and writes the gradient into `grad` (already sized).
/// A non-finite value marks x as infeasible; the line search backs off.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iter = 100;
  // Converged when the largest gradient component is at most this.
  double gtol = 1e-4;
  // Converged when (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) <= ftol. 0 disables.
  double ftol = 0.0;
  int max_linesearch = 40;
};

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  Vector grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a strong-Wolfe bracketing line search.
LbfgsResult minimize_lbfgs(const Objective& fn, Vector x0, const LbfgsOptions& opts = {});

}  // namespace gazescreen
