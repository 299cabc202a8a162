#include "gazescreen/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/io.hpp"
#include "gazescreen/rng.hpp"
#include "gazescreen/smo.hpp"

namespace gazescreen {
namespace {

constexpr double kEulerGamma = 0.5772156649015329;

void check_rows(const Matrix& X, std::size_t min_rows, const char* what) {
  if (static_cast<std::size_t>(X.rows()) < min_rows) {
    fail(ErrorCode::EmptyDataset, fmt::format("{} needs at least {} rows, got {}", what, min_rows, X.rows()));
  }
  if (!X.allFinite()) fail(ErrorCode::NonFiniteValue, fmt::format("{} input contains NaN or Inf", what));
}

void check_dims(const NoveltyModel& model, Eigen::Index cols) {
  if (static_cast<std::size_t>(cols) != model.n_features()) {
    fail(ErrorCode::DimensionMismatch, fmt::format("{} expects {} features, got {}", model.name(), model.n_features(), cols));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double harmonic_approx(double i) {
  const double i2 = i * i;
  return std::log(i) + kEulerGamma + 1.0 / (2.0 * i) - 1.0 / (12.0 * i2) + 1.0 / (120.0 * i2 * i2);
}

double average_path_length(double m) {
  if (m <= 1.0) return 0.0;
  return 2.0 * harmonic_approx(m - 1.0) - 2.0 * (m - 1.0) / m;
}

double isolation_score(double mean_path, std::size_t psi) {
  const double c = average_path_length(static_cast<double>(psi));
  if (!(c > 0.0)) return 0.5;
  return std::exp2(-mean_path / c);
}

IsolationTree::IsolationTree(std::vector<IsoNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) fail(ErrorCode::EmptyNode, "isolation tree without nodes");
}

double IsolationTree::path_length(const double* x) const {
  std::size_t k = 0;
  while (!nodes_[k].is_leaf()) {
    const IsoNode& n = nodes_[k];
    k = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
  return static_cast<double>(nodes_[k].depth) + average_path_length(nodes_[k].size);
}

std::size_t IsolationTree::height() const {
  std::uint32_t h = 0;
  for (const auto& n : nodes_) h = std::max(h, n.depth);
  return h;
}

IsolationForestModel::IsolationForestModel(std::vector<IsolationTree> trees, std::size_t psi, std::size_t n_features,
                                           std::uint64_t seed)
    : trees_(std::move(trees)), psi_(psi), n_features_(n_features), seed_(seed) {
  if (trees_.empty()) fail(ErrorCode::InvalidHyperParam, "isolation forest needs at least one tree");
}

double IsolationForestModel::mean_path_length(std::span<const double> x) const {
  if (x.size() != n_features_) {
    fail(ErrorCode::DimensionMismatch, fmt::format("iforest expects {} features, got {}", n_features_, x.size()));
  }
  double total = 0.0;
  for (const auto& t : trees_) total += t.path_length(x.data());
  return total / static_cast<double>(trees_.size());
}

double IsolationForestModel::anomaly_score(std::span<const double> x) const {
  return isolation_score(mean_path_length(x), psi_);
}

Vector IsolationForestModel::anomaly_scores(const Matrix& X) const {
  check_dims(*this, X.cols());
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[i] = anomaly_score({X.row(i).data(), static_cast<std::size_t>(X.cols())});
  }
  return out;
}

Vector IsolationForestModel::decision(const Matrix& X) const { return 0.5 - anomaly_scores(X).array(); }

namespace {

IsolationTree grow_isolation_tree(const Matrix& X, std::vector<Eigen::Index> rows, std::uint32_t max_depth, Rng& rng) {
  struct Pending {
    std::size_t node;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<IsoNode> nodes(1);
  nodes[0].size = static_cast<std::uint32_t>(rows.size());
  std::vector<Pending> stack{{0, 0, rows.size()}};
  std::vector<int> candidates;
  std::vector<double> lo(static_cast<std::size_t>(X.cols())), hi(static_cast<std::size_t>(X.cols()));

  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::uint32_t depth = nodes[job.node].depth;
    if (job.end - job.begin <= 1 || depth >= max_depth) continue;

    candidates.clear();
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
      double a = std::numeric_limits<double>::infinity(), b = -a;
      for (std::size_t k = job.begin; k < job.end; ++k) {
        const double v = X(rows[k], f);
        a = std::min(a, v);
        b = std::max(b, v);
      }
      lo[static_cast<std::size_t>(f)] = a;
      hi[static_cast<std::size_t>(f)] = b;
      if (b > a) candidates.push_back(static_cast<int>(f));
    }
    if (candidates.empty()) continue;

    const int f = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    const auto fu = static_cast<std::size_t>(f);
    const double thr = std::uniform_real_distribution<double>(lo[fu], hi[fu])(rng);
    const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                    rows.begin() + static_cast<std::ptrdiff_t>(job.end),
                                    [&](Eigen::Index r) { return X(r, f) <= thr; });
    const auto split = static_cast<std::size_t>(mid - rows.begin());

    const auto left = static_cast<std::int32_t>(nodes.size());
    nodes.push_back({-1, 0.0, -1, -1, depth + 1, static_cast<std::uint32_t>(split - job.begin)});
    nodes.push_back({-1, 0.0, -1, -1, depth + 1, static_cast<std::uint32_t>(job.end - split)});
    IsoNode& parent = nodes[job.node];
    parent.feature = f;
    parent.threshold = thr;
    parent.left = left;
    parent.right = left + 1;
    stack.push_back({static_cast<std::size_t>(left + 1), split, job.end});
    stack.push_back({static_cast<std::size_t>(left), job.begin, split});
  }
  return IsolationTree(std::move(nodes));
}

}  // namespace

IsolationForestModel fit_isolation_forest(const Matrix& X, const IsoForestParams& params, std::uint64_t seed) {
  check_rows(X, 2, "isolation forest");
  if (params.n_trees == 0) fail(ErrorCode::InvalidHyperParam, "n_trees must be >= 1");
  if (params.subsample < 2) fail(ErrorCode::InvalidHyperParam, "subsample must be >= 2");
  const auto n = static_cast<std::size_t>(X.rows());
  const std::size_t psi = std::min(params.subsample, n);
  const auto max_depth = static_cast<std::uint32_t>(std::ceil(std::log2(static_cast<double>(psi))));

  std::vector<IsolationTree> trees;
  trees.reserve(params.n_trees);
  std::vector<Eigen::Index> all(n);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(seed, t));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    // Partial Fisher-Yates: the first psi entries are the subsample.
    for (std::size_t k = 0; k < psi; ++k) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(k, n - 1)(rng);
      std::swap(all[k], all[j]);
    }
    std::vector<Eigen::Index> rows(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi));
    trees.push_back(grow_isolation_tree(X, std::move(rows), max_depth, rng));
  }
  return IsolationForestModel(std::move(trees), psi, static_cast<std::size_t>(X.cols()), seed);
}

// ---------------------------------------------------------------------------

OneClassSvmModel::OneClassSvmModel(Matrix support, Vector coef, double rho, double gamma, double nu, bool converged,
                                   std::size_t iterations)
    : support_(std::move(support)),
      coef_(std::move(coef)),
      rho_(rho),
      gamma_(gamma),
      nu_(nu),
      converged_(converged),
      iterations_(iterations) {}

Vector OneClassSvmModel::decision(const Matrix& X) const {
  check_dims(*this, X.cols());
  Vector out(X.rows());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, X.rows() - r0);
    out.segment(r0, rows) = (rbf_matrix(X.middleRows(r0, rows), support_, gamma_) * coef_).array() - rho_;
  }
  return out;
}

OneClassSvmModel fit_ocsvm(const Matrix& X, const OcSvmParams& params) {
  check_rows(X, 2, "one-class SVM");
  if (!(params.nu > 0.0 && params.nu <= 1.0)) fail(ErrorCode::InvalidHyperParam, "nu must lie in (0, 1]");
  if (params.gamma < 0.0) fail(ErrorCode::InvalidHyperParam, "gamma must be >= 0 (0 selects scale)");
  if (!(params.tol > 0.0)) fail(ErrorCode::InvalidHyperParam, "tol must be > 0");
  const auto n = static_cast<std::size_t>(X.rows());
  const double gamma = params.gamma > 0.0 ? params.gamma : scale_gamma(X);

  // Dual in the unnormalized form: 0 <= a_i <= 1, sum a = nu n. The first
  // floor(nu n) rows start at the bound and one row takes the remainder.
  const double mass = params.nu * static_cast<double>(n);
  Vector alpha0 = Vector::Zero(static_cast<Eigen::Index>(n));
  const auto full = static_cast<std::size_t>(mass);
  for (std::size_t i = 0; i < std::min(full, n); ++i) alpha0[static_cast<Eigen::Index>(i)] = 1.0;
  if (full < n) alpha0[static_cast<Eigen::Index>(full)] = mass - static_cast<double>(full);

  std::vector<signed char> y(n, 1);
  std::vector<double> upper(n, 1.0);
  std::vector<double> p(n, 0.0);
  SmoProblem problem{&X, gamma, p, y, upper, alpha0};
  SmoOptions opts;
  opts.tol = params.tol;
  opts.max_iter = params.max_iter != 0 ? params.max_iter : std::max<std::size_t>(10'000'000, 100 * n);
  opts.cache_mb = params.cache_mb;
  const SmoResult res = solve_smo(problem, opts);

  // Offset at the low end of the KKT band: every row below the bound then
  // scores >= 0, so training outliers are all at-bound rows and number at
  // most nu n.
  double rho = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> sv;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (res.alpha[k] < 1.0) rho = std::min(rho, res.grad[k]);
    if (res.alpha[k] > 0.0) sv.push_back(k);
  }
  if (!std::isfinite(rho)) rho = res.rho;
  Matrix support(static_cast<Eigen::Index>(sv.size()), X.cols());
  Vector coef(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    support.row(static_cast<Eigen::Index>(k)) = X.row(sv[k]);
    coef[static_cast<Eigen::Index>(k)] = res.alpha[sv[k]] / mass;
  }
  return OneClassSvmModel(std::move(support), std::move(coef), rho / mass, gamma, params.nu, res.converged,
                          res.iterations);
}

// ---------------------------------------------------------------------------

std::string_view to_string(PointTag tag) {
  switch (tag) {
    case PointTag::Train: return "train";
    case PointTag::Regular: return "regular";
    case PointTag::Abnormal: return "abnormal";
  }
  return "?";
}

double BoundaryGrid::node_x(std::size_t ix) const {
  if (resolution == 1) return 0.5 * (bounds.x_min + bounds.x_max);
  return bounds.x_min + (bounds.x_max - bounds.x_min) * static_cast<double>(ix) / static_cast<double>(resolution - 1);
}

double BoundaryGrid::node_y(std::size_t iy) const {
  if (resolution == 1) return 0.5 * (bounds.y_min + bounds.y_max);
  return bounds.y_min + (bounds.y_max - bounds.y_min) * static_cast<double>(iy) / static_cast<double>(resolution - 1);
}

double BoundaryGrid::value_at(double x, double y) const {
  auto nearest = [&](double v, double lo, double hi) -> std::size_t {
    if (resolution == 1 || !(hi > lo)) return 0;
    const double u = std::round((v - lo) / (hi - lo) * static_cast<double>(resolution - 1));
    return static_cast<std::size_t>(std::clamp(u, 0.0, static_cast<double>(resolution - 1)));
  };
  return value(nearest(x, bounds.x_min, bounds.x_max), nearest(y, bounds.y_min, bounds.y_max));
}

double BoundaryGrid::negative_fraction(PointTag tag) const {
  std::size_t total = 0, negative = 0;
  for (const auto& p : points) {
    if (p.tag != tag) continue;
    ++total;
    negative += value_at(p.x, p.y) < 0.0;
  }
  if (total == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(negative) / static_cast<double>(total);
}

GridBounds padded_bounds(std::initializer_list<const Matrix*> sets, std::array<int, 2> dims) {
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  for (const Matrix* m : sets) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (int a = 0; a < 2; ++a) {
        lo[a] = std::min(lo[a], (*m)(i, dims[static_cast<std::size_t>(a)]));
        hi[a] = std::max(hi[a], (*m)(i, dims[static_cast<std::size_t>(a)]));
      }
    }
  }
  if (!std::isfinite(lo[0])) fail(ErrorCode::EmptyDataset, "no points to bound the grid");
  GridBounds b;
  double* out[2][2] = {{&b.x_min, &b.x_max}, {&b.y_min, &b.y_max}};
  for (int a = 0; a < 2; ++a) {
    const double range = hi[a] - lo[a];
    const double pad = range > 0.0 ? 0.1 * range : 0.5;
    *out[a][0] = lo[a] - pad;
    *out[a][1] = hi[a] + pad;
  }
  return b;
}

BoundaryGrid export_boundary_grid(const NoveltyModel& model, const Matrix& train, const Matrix& regular,
                                  const Matrix& abnormal, std::array<int, 2> dims, std::size_t resolution) {
  std::vector<const Matrix*> present;
  for (const Matrix* m : {&train, &regular, &abnormal}) {
    if (m->rows() > 0) present.push_back(m);
  }
  if (present.empty()) fail(ErrorCode::EmptyDataset, "no points to bound the grid");
  for (const Matrix* m : present) {
    for (int d : dims) {
      if (d < 0 || d >= m->cols()) fail(ErrorCode::DimensionMismatch, fmt::format("plotted column {} outside {} columns", d, m->cols()));
    }
  }
  Eigen::Index rows = 0;
  for (const Matrix* m : present) rows += m->rows();
  Matrix stacked(rows, 2);
  Eigen::Index r = 0;
  for (const Matrix* m : present) {
    stacked.middleRows(r, m->rows()) << m->col(dims[0]), m->col(dims[1]);
    r += m->rows();
  }
  const GridBounds b = padded_bounds({&stacked}, {0, 1});
  return export_boundary_grid(model, train, regular, abnormal, dims, resolution, b);
}

BoundaryGrid export_boundary_grid(const NoveltyModel& model, const Matrix& train, const Matrix& regular,
                                  const Matrix& abnormal, std::array<int, 2> dims, std::size_t resolution,
                                  const GridBounds& bounds) {
  if (resolution == 0) fail(ErrorCode::InvalidHyperParam, "grid resolution must be >= 1");
  if (model.n_features() != 2) {
    fail(ErrorCode::DimensionMismatch, fmt::format("grid export needs a 2-feature model, {} has {}", model.name(), model.n_features()));
  }
  BoundaryGrid grid;
  grid.bounds = bounds;
  grid.resolution = resolution;

  Matrix nodes(static_cast<Eigen::Index>(resolution * resolution), 2);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      const auto r = static_cast<Eigen::Index>(iy * resolution + ix);
      nodes(r, 0) = grid.node_x(ix);
      nodes(r, 1) = grid.node_y(iy);
    }
  }
  const Vector v = model.decision(nodes);
  grid.values.assign(v.data(), v.data() + v.size());

  const std::pair<const Matrix*, PointTag> overlays[] = {
      {&train, PointTag::Train}, {&regular, PointTag::Regular}, {&abnormal, PointTag::Abnormal}};
  for (const auto& [m, tag] : overlays) {
    if (m->rows() == 0) continue;
    for (int d : dims) {
      if (d < 0 || d >= m->cols()) fail(ErrorCode::DimensionMismatch, fmt::format("plotted column {} outside {} columns", d, m->cols()));
    }
    Matrix proj(m->rows(), 2);
    proj << m->col(dims[0]), m->col(dims[1]);
    const Vector pv = model.decision(proj);
    for (Eigen::Index i = 0; i < proj.rows(); ++i) grid.points.push_back({proj(i, 0), proj(i, 1), pv[i], tag});
  }
  return grid;
}

void write_grid_csv(std::ostream& out, const BoundaryGrid& grid) { out << grid_csv(grid); }

std::string grid_csv(const BoundaryGrid& grid) {
  std::string s = "kind,x,y,value,tag\n";
  auto row = [&](std::string_view kind, double x, double y, double v, std::string_view tag) {
    s += kind;
    s += ',';
    append_shortest(s, x);
    s += ',';
    append_shortest(s, y);
    s += ',';
    append_shortest(s, v);
    s += ',';
    s += tag;
    s += '\n';
  };
  for (std::size_t iy = 0; iy < grid.resolution; ++iy) {
    for (std::size_t ix = 0; ix < grid.resolution; ++ix) row("grid", grid.node_x(ix), grid.node_y(iy), grid.value(ix, iy), "");
  }
  for (const auto& p : grid.points) row("point", p.x, p.y, p.value, to_string(p.tag));
  return s;
}

}  // namespace gazescreen
