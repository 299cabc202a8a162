#pragma once

// Reference computations shared by unit and acceptance tests: brute force
// and direct counting, using nothing from the library but its types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "gazescreen/matrix.hpp"

namespace oracle {

using gazescreen::Matrix;
using gazescreen::Vector;

// ---------------------------------------------------------------------------
// Exhaustive CART: every (feature, midpoint) of every node, children gini by
// direct counting. Ties keep the first candidate in (feature, threshold) order.

struct CartNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  int n0 = 0;
  int n1 = 0;
  std::unique_ptr<CartNode> left;
  std::unique_ptr<CartNode> right;
};

inline double count_gini(int c0, int c1) {
  const double n = c0 + c1;
  const double p0 = c0 / n;
  const double p1 = c1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

inline std::unique_ptr<CartNode> cart_build(const Matrix& X, const std::vector<int>& y, const std::vector<int>& rows) {
  auto node = std::make_unique<CartNode>();
  for (int r : rows) (y[static_cast<std::size_t>(r)] ? node->n1 : node->n0)++;
  if (node->n0 == 0 || node->n1 == 0 || rows.size() < 2) return node;

  double best = 0.0;
  bool found = false;
  for (int f = 0; f < X.cols(); ++f) {
    std::set<double> distinct;
    for (int r : rows) distinct.insert(X(r, f));
    std::vector<double> vs(distinct.begin(), distinct.end());
    for (std::size_t k = 0; k + 1 < vs.size(); ++k) {
      double thr = 0.5 * vs[k] + 0.5 * vs[k + 1];
      if (thr >= vs[k + 1]) thr = vs[k];
      int l0 = 0, l1 = 0, r0 = 0, r1 = 0;
      for (int r : rows) {
        const bool left = X(r, f) <= thr;
        const int lab = y[static_cast<std::size_t>(r)];
        if (left) (lab ? l1 : l0)++;
        else (lab ? r1 : r0)++;
      }
      const double imp = (l0 + l1) * count_gini(l0, l1) + (r0 + r1) * count_gini(r0, r1);
      if (!found || imp < best - 1e-12 * static_cast<double>(rows.size())) {
        best = imp;
        found = true;
        node->feature = f;
        node->threshold = thr;
      }
    }
  }
  if (!found) return node;
  node->leaf = false;
  std::vector<int> left, right;
  for (int r : rows) (X(r, node->feature) <= node->threshold ? left : right).push_back(r);
  node->left = cart_build(X, y, left);
  node->right = cart_build(X, y, right);
  return node;
}

inline int cart_predict(const CartNode& node, const double* x) {
  const CartNode* n = &node;
  while (!n->leaf) n = x[n->feature] <= n->threshold ? n->left.get() : n->right.get();
  return n->n1 > n->n0 ? 1 : 0;
}

inline double cart_training_accuracy(const CartNode& root, const Matrix& X, const std::vector<int>& y) {
  int correct = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) correct += cart_predict(root, X.row(i).data()) == y[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(X.rows());
}

// ---------------------------------------------------------------------------
// AUC by enumerating every positive/negative pair; ties count one half.
// Returned as (numerator in half-units, pair count) so comparisons are exact.

struct PairCount {
  std::int64_t half_units = 0;
  std::int64_t pairs = 0;
  double auc() const { return static_cast<double>(half_units) / (2.0 * static_cast<double>(pairs)); }
};

inline PairCount auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
  PairCount pc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pc.pairs;
      if (scores[i] > scores[j]) pc.half_units += 2;
      else if (scores[i] == scores[j]) pc.half_units += 1;
    }
  }
  return pc;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct Labelled {
  Matrix X;
  std::vector<int> y;
};

/// Two 2-D unit-variance blobs around (-2, 0) and (2, 0), with every point
/// at least 1 from x = 0 (a 2-sigma gap).
inline Labelled gap_blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Labelled d{Matrix(static_cast<Eigen::Index>(n), 2), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double centre = label ? 2.0 : -2.0;
    double x = 0.0;
    do {
      x = centre + z(gen);
    } while (label ? x < 1.0 : x > -1.0);
    d.X(static_cast<Eigen::Index>(i), 0) = x;
    d.X(static_cast<Eigen::Index>(i), 1) = z(gen);
    d.y[i] = label;
  }
  return d;
}

/// Points in [-5, 5]^d labelled by a random hyperplane, keeping only those
/// at distance >= margin from it.
inline Labelled separable(std::size_t n, int dim, double margin, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Vector w(dim);
  for (int k = 0; k < dim; ++k) w[k] = z(gen);
  w.normalize();
  const double b = 0.5 * z(gen);
  Labelled d{Matrix(static_cast<Eigen::Index>(n), dim), std::vector<int>(n)};
  for (std::size_t i = 0; i < n;) {
    Vector x(dim);
    for (int k = 0; k < dim; ++k) x[k] = u(gen);
    const double s = w.dot(x) + b;
    if (std::abs(s) < margin) continue;
    d.X.row(static_cast<Eigen::Index>(i)) = x.transpose();
    d.y[i] = s > 0.0 ? 1 : 0;
    ++i;
  }
  return d;
}

// ---------------------------------------------------------------------------

/// Central finite-difference gradient.
inline Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// |a - b| / |b| in the Euclidean norm.
inline double relative_error(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle
