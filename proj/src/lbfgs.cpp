#include "gazescreen/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "gazescreen/error.hpp"

namespace gazescreen {
namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative along d
  Vector x;
  Vector g;
};

class LineSearch {
 public:
  LineSearch(const Objective& fn, const Vector& x0, const Vector& d, double f0, double slope0, int budget, int& evals)
      : fn_(fn), x0_(x0), d_(d), f0_(f0), slope0_(slope0), budget_(budget), evals_(evals) {}

  // Strong-Wolfe search; returns false when the budget runs out without an
  // acceptable point (the best sufficient-decrease point, if any, is in `out`).
  bool run(double alpha, Point& out) {
    Point prev{0.0, f0_, slope0_, x0_, {}};
    for (int i = 0; budget_ > 0; ++i) {
      Point cur = eval(alpha);
      if (!std::isfinite(cur.f)) {
        alpha = 0.5 * (prev.alpha + alpha);
        continue;
      }
      if (cur.f > f0_ + kC1 * alpha * slope0_ || (i > 0 && cur.f >= prev.f)) return zoom(prev, cur, out);
      if (std::abs(cur.slope) <= -kC2 * slope0_) {
        out = std::move(cur);
        return true;
      }
      remember(cur);
      if (cur.slope >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return fallback(out);
  }

 private:
  Point eval(double alpha) {
    --budget_;
    ++evals_;
    Point p;
    p.alpha = alpha;
    p.x = x0_ + alpha * d_;
    p.g = Vector::Zero(x0_.size());
    p.f = fn_(p.x, p.g);
    p.slope = std::isfinite(p.f) ? p.g.dot(d_) : 0.0;
    return p;
  }

  void remember(const Point& p) {
    if (p.alpha > 0.0 && p.f <= f0_ + kC1 * p.alpha * slope0_ && (!have_best_ || p.f < best_.f)) {
      best_ = p;
      have_best_ = true;
    }
  }

  bool fallback(Point& out) {
    if (!have_best_) return false;
    out = best_;
    return true;
  }

  bool zoom(Point lo, Point hi, Point& out) {
    while (budget_ > 0) {
      const double width = hi.alpha - lo.alpha;
      double alpha = 0.5 * (lo.alpha + hi.alpha);
      if (std::isfinite(hi.f)) {
        const double denom = 2.0 * (hi.f - lo.f - lo.slope * width);
        if (denom > 0.0) alpha = lo.alpha - lo.slope * width * width / denom;
      }
      const double a = std::min(lo.alpha, hi.alpha);
      const double b = std::max(lo.alpha, hi.alpha);
      alpha = std::clamp(alpha, a + 0.1 * (b - a), b - 0.1 * (b - a));

      Point cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + kC1 * alpha * slope0_ || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kC2 * slope0_) {
          out = std::move(cur);
          return true;
        }
        remember(cur);
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    return fallback(out);
  }

  const Objective& fn_;
  const Vector& x0_;
  const Vector& d_;
  double f0_;
  double slope0_;
  int budget_;
  int& evals_;
  Point best_;
  bool have_best_ = false;
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& fn, Vector x0, const LbfgsOptions& opts) {
  if (opts.memory < 1 || opts.max_iter < 0 || opts.gtol < 0.0 || opts.ftol < 0.0 || opts.max_linesearch < 1) {
    fail(ErrorCode::InvalidHyperParam, "invalid L-BFGS options");
  }
  const Eigen::Index n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  res.grad = Vector::Zero(n);
  res.f = fn(res.x, res.grad);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) fail(ErrorCode::NonConvergence, "objective is not finite at the starting point");

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;
  std::vector<double> coef;

  auto direction = [&](const Vector& g) {
    Vector q = -g;
    const std::size_t m = s_hist.size();
    coef.assign(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
      coef[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= coef[i] * y_hist[i];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (coef[i] - beta) * s_hist[i];
    }
    return q;
  };

  for (int k = 0; k < opts.max_iter; ++k) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opts.gtol) break;

    Vector d = direction(res.grad);
    double slope = res.grad.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -res.grad;
      slope = res.grad.dot(d);
    }
    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / res.grad.norm()) : 1.0;

    Point next;
    LineSearch ls(fn, res.x, d, res.f, slope, opts.max_linesearch, res.evaluations);
    if (!ls.run(alpha0, next)) {
      if (s_hist.empty()) break;
      // Stale curvature pairs; retry along steepest descent next iteration.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }

    Vector s = next.x - res.x;
    Vector y = next.g - res.grad;
    const double sy = s.dot(y);
    const double f_prev = res.f;
    res.x = std::move(next.x);
    res.grad = std::move(next.g);
    res.f = next.f;
    res.iterations = k + 1;

    if (sy > 1e-10 * y.squaredNorm()) {
      if (static_cast<int>(s_hist.size()) == opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }

    if (opts.ftol > 0.0 && (f_prev - res.f) <= opts.ftol * std::max({std::abs(f_prev), std::abs(res.f), 1.0})) {
      res.converged = true;
      return res;
    }
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.gtol;
  return res;
}

}  // namespace gazescreen
