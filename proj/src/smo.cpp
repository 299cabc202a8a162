#include "gazescreen/smo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <vector>

#include <fmt/format.h>

#include "gazescreen/error.hpp"

namespace gazescreen {

double rbf(const double* a, const double* b, Eigen::Index d, double gamma) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return std::exp(-gamma * s);
}

Matrix rbf_matrix(const Matrix& A, const Matrix& B, double gamma) {
  if (A.cols() != B.cols()) fail(ErrorCode::DimensionMismatch, fmt::format("kernel inputs have {} and {} columns", A.cols(), B.cols()));
  const Vector a2 = A.rowwise().squaredNorm();
  const Vector b2 = B.rowwise().squaredNorm();
  Matrix K = A * B.transpose();
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      K(i, j) = std::exp(-gamma * std::max(0.0, a2[i] + b2[j] - 2.0 * K(i, j)));
    }
  }
  return K;
}

namespace {

constexpr double kTau = 1e-12;

// LRU cache of kernel columns K(., x_i).
class KernelColumns {
 public:
  KernelColumns(const Matrix& X, double gamma, double cache_mb) : X_(X), gamma_(gamma) {
    const auto n = static_cast<std::size_t>(X.rows());
    sq_ = X.rowwise().squaredNorm();
    const double bytes_per_col = 8.0 * static_cast<double>(n);
    budget_ = std::max<std::size_t>(2, static_cast<std::size_t>(cache_mb * 1024.0 * 1024.0 / bytes_per_col));
    budget_ = std::min(budget_, n);
    cols_.resize(n);
    pos_.resize(n);
    cached_.assign(n, 0);
  }

  const double* get(std::size_t i) {
    if (cached_[i]) {
      lru_.splice(lru_.begin(), lru_, pos_[i]);
      return cols_[i].data();
    }
    std::vector<double> storage;
    if (lru_.size() == budget_) {
      const std::size_t victim = lru_.back();
      lru_.pop_back();
      cached_[victim] = 0;
      storage = std::move(cols_[victim]);
      cols_[victim] = {};
    }
    const auto n = static_cast<std::size_t>(X_.rows());
    storage.resize(n);
    Eigen::Map<Vector> out(storage.data(), static_cast<Eigen::Index>(n));
    out.noalias() = X_ * X_.row(static_cast<Eigen::Index>(i)).transpose();
    const double si = sq_[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < n; ++j) {
      storage[j] = std::exp(-gamma_ * std::max(0.0, si + sq_[static_cast<Eigen::Index>(j)] - 2.0 * storage[j]));
    }
    cols_[i] = std::move(storage);
    lru_.push_front(i);
    pos_[i] = lru_.begin();
    cached_[i] = 1;
    return cols_[i].data();
  }

 private:
  const Matrix& X_;
  double gamma_;
  Vector sq_;
  std::size_t budget_ = 2;
  std::vector<std::vector<double>> cols_;
  std::list<std::size_t> lru_;
  std::vector<std::list<std::size_t>::iterator> pos_;
  std::vector<char> cached_;
};

}  // namespace

double smo_violation(std::span<const signed char> y, std::span<const double> upper, const Vector& alpha,
                     const Vector& grad) {
  double gmax = -std::numeric_limits<double>::infinity();
  double gmax2 = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < y.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t);
    const bool at_upper = alpha[k] >= upper[t];
    const bool at_lower = alpha[k] <= 0.0;
    if (y[t] > 0) {
      if (!at_upper) gmax = std::max(gmax, -grad[k]);
      if (!at_lower) gmax2 = std::max(gmax2, grad[k]);
    } else {
      if (!at_lower) gmax = std::max(gmax, grad[k]);
      if (!at_upper) gmax2 = std::max(gmax2, -grad[k]);
    }
  }
  return gmax + gmax2;
}

SmoResult solve_smo(const SmoProblem& problem, const SmoOptions& options) {
  const Matrix& X = *problem.X;
  const auto n = static_cast<std::size_t>(X.rows());
  if (problem.p.size() != n || problem.y.size() != n || problem.upper.size() != n ||
      static_cast<std::size_t>(problem.alpha0.size()) != n) {
    fail(ErrorCode::LengthMismatch, "SMO problem arrays differ in length");
  }
  if (!(options.tol > 0.0)) fail(ErrorCode::InvalidHyperParam, "SMO tolerance must be > 0");

  const auto y = problem.y;
  const auto C = problem.upper;
  KernelColumns kernel(X, problem.gamma, options.cache_mb);

  SmoResult res;
  res.alpha = problem.alpha0;
  Vector& a = res.alpha;
  Vector& G = res.grad;
  G = Eigen::Map<const Vector>(problem.p.data(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = a[static_cast<Eigen::Index>(i)];
    if (ai == 0.0) continue;
    const double* Ki = kernel.get(i);
    for (std::size_t t = 0; t < n; ++t) G[static_cast<Eigen::Index>(t)] += ai * y[i] * y[t] * Ki[t];
  }

  auto is_upper = [&](std::size_t t) { return a[static_cast<Eigen::Index>(t)] >= C[t]; };
  auto is_lower = [&](std::size_t t) { return a[static_cast<Eigen::Index>(t)] <= 0.0; };

  while (res.iterations < options.max_iter) {
    // Working set: i by maximal violation, j by second-order gain.
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      const double g = G[static_cast<Eigen::Index>(t)];
      if (y[t] > 0) {
        if (!is_upper(t) && -g >= gmax) {
          gmax = -g;
          i_sel = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!is_lower(t) && g >= gmax) {
        gmax = g;
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i_sel < 0) {
      res.converged = true;
      break;
    }
    const auto i = static_cast<std::size_t>(i_sel);
    const double* Ki = kernel.get(i);

    double gmax2 = -std::numeric_limits<double>::infinity();
    double obj_min = std::numeric_limits<double>::infinity();
    std::ptrdiff_t j_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      const double g = G[static_cast<Eigen::Index>(t)];
      const double Qit = y[i] * y[t] * Ki[t];
      if (y[t] > 0) {
        if (is_lower(t)) continue;
        gmax2 = std::max(gmax2, g);
        const double diff = gmax + g;
        if (diff > 0.0) {
          const double quad = 2.0 - 2.0 * y[i] * Qit;
          const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
          if (obj <= obj_min) {
            obj_min = obj;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      } else {
        if (is_upper(t)) continue;
        gmax2 = std::max(gmax2, -g);
        const double diff = gmax - g;
        if (diff > 0.0) {
          const double quad = 2.0 + 2.0 * y[i] * Qit;
          const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
          if (obj <= obj_min) {
            obj_min = obj;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    if (gmax + gmax2 < options.tol || j_sel < 0) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    const auto j = static_cast<std::size_t>(j_sel);
    const double* Kj = kernel.get(j);
    Ki = kernel.get(i);

    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    const double Qij = y[i] * y[j] * Ki[j];
    const double Ci = C[i];
    const double Cj = C[j];
    const double old_ai = a[ii];
    const double old_aj = a[jj];
    double ai = old_ai;
    double aj = old_aj;

    if (y[i] != y[j]) {
      double quad = 2.0 + 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[ii] - G[jj]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > Ci - Cj) {
        if (ai > Ci) {
          ai = Ci;
          aj = Ci - diff;
        }
      } else if (aj > Cj) {
        aj = Cj;
        ai = Cj + diff;
      }
    } else {
      double quad = 2.0 - 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[ii] - G[jj]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > Ci) {
        if (ai > Ci) {
          ai = Ci;
          aj = sum - Ci;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > Cj) {
        if (aj > Cj) {
          aj = Cj;
          ai = sum - Cj;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    a[ii] = ai;
    a[jj] = aj;

    const double dai = (ai - old_ai) * y[i];
    const double daj = (aj - old_aj) * y[j];
    for (std::size_t t = 0; t < n; ++t) G[static_cast<Eigen::Index>(t)] += y[t] * (Ki[t] * dai + Kj[t] * daj);
  }

  // Offset from free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[static_cast<Eigen::Index>(t)];
    if (is_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  return res;
}

}  // namespace gazescreen
