#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "gazescreen/error.hpp"
#include "gazescreen/novelty.hpp"
#include "gazescreen/smo.hpp"

using namespace gazescreen;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

Matrix gaussian_cloud(Eigen::Index n, Eigen::Index d, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, sd);
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) X(i, k) = z(gen);
  }
  return X;
}

double exact_harmonic(int i) {
  double h = 0.0;
  for (int k = 1; k <= i; ++k) h += 1.0 / k;
  return h;
}

}  // namespace

TEST_CASE("c(m) tracks the exact harmonic sum") {
  CHECK(average_path_length(1.0) == 0.0);
  CHECK(average_path_length(0.0) == 0.0);
  for (int m = 2; m <= 1000; ++m) {
    const double exact = 2.0 * exact_harmonic(m - 1) - 2.0 * (m - 1.0) / m;
    CHECK(std::abs(average_path_length(m) - exact) < 0.01);
  }
}

TEST_CASE("isolation score normalisation") {
  for (std::size_t psi : {2u, 16u, 256u}) {
    CHECK(isolation_score(average_path_length(static_cast<double>(psi)), psi) == 0.5);
    CHECK(isolation_score(0.0, psi) == 1.0);
    double previous = 1.0;
    for (double h = 0.5; h < 40.0; h += 0.5) {
      const double s = isolation_score(h, psi);
      CHECK(s > 0.0);
      CHECK(s < previous);
      previous = s;
    }
  }
}

TEST_CASE("hand-built isolation tree of depth 2") {
  // Four 1-D points {0, 1, 2, 3}: root splits at 1.5, each child at its
  // midpoint, leaving four singleton leaves at depth 2. A second tree leaves
  // a two-point leaf at depth 1 on the right.
  IsolationTree full({{0, 1.5, 1, 2, 0, 4},
                      {0, 0.5, 3, 4, 1, 2},
                      {0, 2.5, 5, 6, 1, 2},
                      {-1, 0, -1, -1, 2, 1},
                      {-1, 0, -1, -1, 2, 1},
                      {-1, 0, -1, -1, 2, 1},
                      {-1, 0, -1, -1, 2, 1}});
  IsolationTree lopsided({{0, 0.5, 1, 2, 0, 4}, {-1, 0, -1, -1, 1, 1}, {-1, 0, -1, -1, 1, 3}});
  CHECK(full.height() == 2);

  const IsolationForestModel model({full, lopsided}, 4, 1, 0);
  // c(4) = 2 H(3) - 3/2 and c(3) = 2 H(2) - 4/3 by the approximation used.
  const double c4 = 2.0 * harmonic_approx(3.0) - 1.5;
  const double c3 = 2.0 * harmonic_approx(2.0) - 4.0 / 3.0;
  const std::array<double, 1> left{0.0};
  const std::array<double, 1> right{3.0};
  CHECK(model.mean_path_length(left) == doctest::Approx(0.5 * (2.0 + 1.0)).epsilon(1e-15));
  CHECK(model.anomaly_score(left) == doctest::Approx(std::pow(2.0, -1.5 / c4)).epsilon(1e-12));
  CHECK(model.anomaly_score(right) == doctest::Approx(std::pow(2.0, -0.5 * (2.0 + 1.0 + c3) / c4)).epsilon(1e-12));
  CHECK(model.anomaly_score(left) > model.anomaly_score(right));
  CHECK(code_of([&] { model.anomaly_score(std::array<double, 2>{0, 0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("isolation forest structure") {
  const Matrix X = gaussian_cloud(500, 3, 1.0, 1);
  const auto model = fit_isolation_forest(X, {}, 4);
  CHECK(model.trees().size() == 100);
  CHECK(model.psi() == 256);
  for (const auto& t : model.trees()) {
    CHECK(t.height() <= 8);
    CHECK(t.nodes()[0].size == 256);
    std::uint32_t leaf_rows = 0;
    for (const auto& n : t.nodes()) {
      if (n.is_leaf()) leaf_rows += n.size;
      else CHECK(t.nodes()[static_cast<std::size_t>(n.left)].size + t.nodes()[static_cast<std::size_t>(n.right)].size == n.size);
    }
    CHECK(leaf_rows == 256);
  }
  const Vector s = model.anomaly_scores(X);
  CHECK((s.array() > 0.0).all());
  CHECK((s.array() < 1.0).all());
  CHECK(model.decision(X).isApprox((0.5 - s.array()).matrix()));

  const auto again = fit_isolation_forest(X, {}, 4);
  CHECK(again.anomaly_scores(X) == s);
  CHECK_FALSE(fit_isolation_forest(X, {}, 5).anomaly_scores(X) == s);

  IsoForestParams small;
  small.subsample = 1000;
  CHECK(fit_isolation_forest(X, small, 4).psi() == 500);
}

TEST_CASE("isolation forest on identical rows scores every row alike") {
  const Matrix X = Matrix::Constant(50, 2, 3.0);
  const auto model = fit_isolation_forest(X, {}, 1);
  const Vector s = model.anomaly_scores(X);
  CHECK((s.array() == s[0]).all());
  for (const auto& t : model.trees()) CHECK(t.nodes().size() == 1);
  CHECK(code_of([] { fit_isolation_forest(Matrix::Zero(1, 2)); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("isolation forest ranks a 10-sigma point first") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix X = gaussian_cloud(201, 2, 1.0, 100 + seed);
    X.row(200) << 10.0, 0.0;
    const Vector s = fit_isolation_forest(X, {}, seed).anomaly_scores(X);
    Eigen::Index top = 0;
    s.maxCoeff(&top);
    wins += top == 200;
  }
  CHECK(wins >= 19);
}

TEST_CASE("one-class SVM respects the nu bounds") {
  for (double nu : {0.05, 0.1, 0.3, 0.5}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Matrix X = gaussian_cloud(150, 2, 1.0, seed);
      OcSvmParams p;
      p.nu = nu;
      const auto model = fit_ocsvm(X, p);
      CHECK(model.converged());
      const double n = 150.0;
      CHECK(model.coef().sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(model.coef().minCoeff() > 0.0);
      CHECK(model.coef().maxCoeff() <= 1.0 / (nu * n) + 1e-15);
      const Vector f = model.decision(X);
      const double outliers = static_cast<double>((f.array() < 0.0).count()) / n;
      CHECK(outliers <= nu + 1.0 / n);
      CHECK(static_cast<double>(model.support_vectors().rows()) / n >= nu - 1.0 / n);
    }
  }
}

TEST_CASE("one-class SVM dual is optimal") {
  const Matrix X = gaussian_cloud(80, 3, 1.0, 9);
  const double gamma = 0.4;
  const std::size_t n = 80;
  std::vector<signed char> y(n, 1);
  std::vector<double> upper(n, 1.0), p(n, 0.0);
  Vector a0 = Vector::Zero(80);
  a0.head(8).setOnes();
  const auto res = solve_smo({&X, gamma, p, y, upper, a0});
  CHECK(res.alpha.sum() == doctest::Approx(8.0).epsilon(1e-12));
  // Gradient from scratch, then the maximal violating pair gap.
  Vector grad = Vector::Zero(80);
  for (Eigen::Index i = 0; i < 80; ++i) {
    for (Eigen::Index j = 0; j < 80; ++j) grad[i] += std::exp(-gamma * (X.row(i) - X.row(j)).squaredNorm()) * res.alpha[j];
  }
  double up = -INFINITY, low = INFINITY;
  for (Eigen::Index i = 0; i < 80; ++i) {
    if (res.alpha[i] < 1.0) up = std::max(up, -grad[i]);
    if (res.alpha[i] > 0.0) low = std::min(low, -grad[i]);
  }
  CHECK(up - low <= 1e-3 + 1e-9);
}

TEST_CASE("one-class SVM ordering and symmetry") {
  Matrix X = gaussian_cloud(100, 2, 0.5, 3);
  X.row(99) = X.row(0);
  const auto model = fit_ocsvm(X);
  const Vector f = model.decision(X);
  CHECK(f[0] == f[99]);
  Matrix q(3, 2);
  const Eigen::RowVector2d centroid = X.colwise().mean();
  q.row(0) = centroid;
  q.row(1) << centroid[0] + 5.0, centroid[1];
  q.row(2) << centroid[0], centroid[1] - 5.0;
  const Vector fq = model.decision(q);
  CHECK(fq[0] >= fq[1]);
  CHECK(fq[0] >= fq[2]);
  CHECK(fq[0] > 0.0);
  CHECK(fq[1] < 0.0);

  OcSvmParams bad;
  bad.nu = 0.0;
  CHECK(code_of([&] { fit_ocsvm(X, bad); }) == ErrorCode::InvalidHyperParam);
  CHECK(code_of([&] { model.decision(Matrix::Zero(1, 3)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("boundary grid export") {
  const Matrix train = gaussian_cloud(60, 2, 1.0, 11);
  const auto model = fit_ocsvm(train);
  const Matrix regular = gaussian_cloud(20, 2, 1.0, 12);
  Matrix abnormal = gaussian_cloud(10, 2, 0.3, 13);
  abnormal.col(0).array() += 6.0;

  SUBCASE("known bounds, resolution 3") {
    const GridBounds b{-1.0, 1.0, 0.0, 4.0};
    const auto grid = export_boundary_grid(model, train, regular, abnormal, {0, 1}, 3, b);
    REQUIRE(grid.values.size() == 9);
    const double xs[3] = {-1.0, 0.0, 1.0};
    const double ys[3] = {0.0, 2.0, 4.0};
    for (std::size_t iy = 0; iy < 3; ++iy) {
      for (std::size_t ix = 0; ix < 3; ++ix) {
        Matrix q(1, 2);
        q << xs[ix], ys[iy];
        CHECK(grid.value(ix, iy) == doctest::Approx(model.decision(q)[0]).epsilon(1e-12).scale(1.0));
      }
    }
    CHECK(grid.points.size() == 90);
  }
  SUBCASE("padded bounds and tags") {
    const auto grid = export_boundary_grid(model, train, regular, abnormal, {0, 1}, 20);
    double lo = INFINITY, hi = -INFINITY;
    for (const Matrix* m : {&train, &regular, static_cast<const Matrix*>(&abnormal)}) {
      lo = std::min(lo, m->col(0).minCoeff());
      hi = std::max(hi, m->col(0).maxCoeff());
    }
    CHECK(grid.bounds.x_min == doctest::Approx(lo - 0.1 * (hi - lo)));
    CHECK(grid.bounds.x_max == doctest::Approx(hi + 0.1 * (hi - lo)));
    CHECK(grid.values.size() == 400);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& p : grid.points) ++counts[static_cast<int>(p.tag)];
    CHECK(counts[0] == 60);
    CHECK(counts[1] == 20);
    CHECK(counts[2] == 10);
    CHECK(grid.negative_fraction(PointTag::Abnormal) == 1.0);

    const std::string csv = grid_csv(grid);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "kind,x,y,value,tag");
    std::size_t grid_rows = 0, point_rows = 0;
    while (std::getline(in, line)) {
      if (line.rfind("grid,", 0) == 0) {
        ++grid_rows;
        CHECK(line.back() == ',');
      } else if (line.rfind("point,", 0) == 0) {
        ++point_rows;
      }
    }
    CHECK(grid_rows == 400);
    CHECK(point_rows == 90);
  }
  SUBCASE("empty abnormal overlay") {
    const auto grid = export_boundary_grid(model, train, regular, Matrix(0, 2), {0, 1}, 5);
    CHECK(grid.points.size() == 80);
    CHECK(std::isnan(grid.negative_fraction(PointTag::Abnormal)));
  }
  SUBCASE("errors") {
    const Matrix wide = gaussian_cloud(10, 3, 1.0, 1);
    CHECK(code_of([&] { export_boundary_grid(model, train, regular, abnormal, {0, 2}, 5); }) == ErrorCode::DimensionMismatch);
    const auto wide_model = fit_isolation_forest(wide, {}, 1);
    CHECK(code_of([&] { export_boundary_grid(wide_model, wide, wide, wide, {0, 1}, 5); }) == ErrorCode::DimensionMismatch);
  }
}
