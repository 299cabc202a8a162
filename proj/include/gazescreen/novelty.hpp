#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gazescreen/matrix.hpp"

namespace gazescreen {

/// Shared interface for the two novelty detectors: positive decision values
/// mark inliers, negative values outliers.
class NoveltyModel {
 public:
  virtual ~NoveltyModel() = default;
  virtual std::size_t n_features() const = 0;
  virtual Vector decision(const Matrix& X) const = 0;
  virtual std::string name() const = 0;
};

// ------------------------------------------------------------ isolation forest

/// Average unsuccessful-search path length of a binary search tree over m
/// points, c(m) = 2 H(m-1) - 2 (m-1) / m, with c(m) = 0 for m <= 1.
double average_path_length(double m);

/// Harmonic number approximation ln i + Euler-Mascheroni + correction terms.
double harmonic_approx(double i);

/// s = 2^(-mean_path / c(psi)).
double isolation_score(double mean_path, std::size_t psi);

struct IsoNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t depth = 0;
  std::uint32_t size = 0;  // training rows reaching the node

  bool is_leaf() const { return feature < 0; }
};

class IsolationTree {
 public:
  IsolationTree() = default;
  explicit IsolationTree(std::vector<IsoNode> nodes);

  const std::vector<IsoNode>& nodes() const { return nodes_; }
  /// Leaf depth plus c(size) of the leaf reached by x.
  double path_length(const double* x) const;
  std::size_t height() const;

 private:
  std::vector<IsoNode> nodes_;
};

struct IsoForestParams {
  std::size_t n_trees = 100;
  std::size_t subsample = 256;  // psi, clipped to n
};

class IsolationForestModel final : public NoveltyModel {
 public:
  IsolationForestModel(std::vector<IsolationTree> trees, std::size_t psi, std::size_t n_features, std::uint64_t seed);

  std::size_t n_features() const override { return n_features_; }
  std::string name() const override { return "iforest"; }
  const std::vector<IsolationTree>& trees() const { return trees_; }
  std::size_t psi() const { return psi_; }
  std::uint64_t seed() const { return seed_; }

  double mean_path_length(std::span<const double> x) const;
  /// Anomaly score in (0, 1); larger is more anomalous.
  double anomaly_score(std::span<const double> x) const;
  Vector anomaly_scores(const Matrix& X) const;
  /// 0.5 - anomaly score.
  Vector decision(const Matrix& X) const override;

 private:
  std::vector<IsolationTree> trees_;
  std::size_t psi_;
  std::size_t n_features_;
  std::uint64_t seed_;
};

IsolationForestModel fit_isolation_forest(const Matrix& X, const IsoForestParams& params = {},
                                          std::uint64_t seed = 0);

// --------------------------------------------------------------- one-class SVM

struct OcSvmParams {
  double nu = 0.1;
  double gamma = 0.0;  // 0 = 1 / (d * mean per-feature variance)
  double tol = 1e-3;
  std::size_t max_iter = 0;  // 0 = max(10^7, 100 n)
  double cache_mb = 256.0;
};

class OneClassSvmModel final : public NoveltyModel {
 public:
  OneClassSvmModel(Matrix support, Vector coef, double rho, double gamma, double nu, bool converged,
                   std::size_t iterations);

  std::size_t n_features() const override { return static_cast<std::size_t>(support_.cols()); }
  std::string name() const override { return "ocsvm"; }
  const Matrix& support_vectors() const { return support_; }
  /// Normalized to sum 1, each in [0, 1 / (nu n)].
  const Vector& coef() const { return coef_; }
  double rho() const { return rho_; }
  double gamma() const { return gamma_; }
  double nu() const { return nu_; }
  bool converged() const { return converged_; }
  std::size_t iterations() const { return iterations_; }

  /// sum_i coef_i K(x_i, x) - rho.
  Vector decision(const Matrix& X) const override;

 private:
  Matrix support_;
  Vector coef_;
  double rho_;
  double gamma_;
  double nu_;
  bool converged_;
  std::size_t iterations_;
};

OneClassSvmModel fit_ocsvm(const Matrix& X, const OcSvmParams& params = {});

// ---------------------------------------------------------------- grid export

enum class PointTag { Train, Regular, Abnormal };
std::string_view to_string(PointTag tag);

struct GridBounds {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
};

struct OverlayPoint {
  double x;
  double y;
  double value;
  PointTag tag;
};

/// Decision values on a resolution x resolution lattice of evenly spaced
/// nodes spanning `bounds` (inclusive), row-major with y outer.
struct BoundaryGrid {
  GridBounds bounds;
  std::size_t resolution = 0;
  std::vector<double> values;
  std::vector<OverlayPoint> points;

  double node_x(std::size_t ix) const;
  double node_y(std::size_t iy) const;
  double value(std::size_t ix, std::size_t iy) const { return values[iy * resolution + ix]; }
  /// Value of the lattice node nearest to (x, y).
  double value_at(double x, double y) const;
  /// Fraction of points with `tag` whose nearest node is negative; NaN if none.
  double negative_fraction(PointTag tag) const;
};

/// Bounding box of all rows padded by 10% of each range (0.5 if a range is 0).
GridBounds padded_bounds(std::initializer_list<const Matrix*> sets, std::array<int, 2> dims);

/// The model must take exactly the two plotted columns.
BoundaryGrid export_boundary_grid(const NoveltyModel& model, const Matrix& train, const Matrix& regular,
                                  const Matrix& abnormal, std::array<int, 2> dims, std::size_t resolution);
BoundaryGrid export_boundary_grid(const NoveltyModel& model, const Matrix& train, const Matrix& regular,
                                  const Matrix& abnormal, std::array<int, 2> dims, std::size_t resolution,
                                  const GridBounds& bounds);

/// `kind,x,y,value,tag`; grid rows first with an empty tag, then points.
void write_grid_csv(std::ostream& out, const BoundaryGrid& grid);
std::string grid_csv(const BoundaryGrid& grid);

}  // namespace gazescreen
