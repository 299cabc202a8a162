#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/serialize.hpp"
#include "gazescreen/smo.hpp"

namespace gazescreen {

double scale_gamma(const Matrix& X) {
  if (X.rows() == 0 || X.cols() == 0) fail(ErrorCode::EmptyDataset, "gamma of an empty matrix");
  double var_sum = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    var_sum += (X.col(j).array() - mean).square().mean();
  }
  const double mean_var = var_sum / static_cast<double>(X.cols());
  return 1.0 / (static_cast<double>(X.cols()) * (mean_var > 0.0 ? mean_var : 1.0));
}

SvcModel::SvcModel(FitInfo info, Matrix support, Vector dual_coef, double bias, double gamma)
    : Classifier(static_cast<std::size_t>(support.cols()), std::move(info)),
      support_(std::move(support)),
      dual_coef_(std::move(dual_coef)),
      bias_(bias),
      gamma_(gamma) {}

double SvcModel::score_row(const double* x) const {
  double s = bias_;
  for (Eigen::Index k = 0; k < support_.rows(); ++k) s += dual_coef_[k] * rbf(support_.row(k).data(), x, support_.cols(), gamma_);
  return s;
}

Vector SvcModel::score_rows(const Matrix& X) const {
  Vector out(X.rows());
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, X.rows() - r0);
    const Matrix K = rbf_matrix(X.middleRows(r0, rows), support_, gamma_);
    out.segment(r0, rows) = (K * dual_coef_).array() + bias_;
  }
  return out;
}

void SvcModel::save_body(TextWriter& out) const {
  out.number("gamma", gamma_);
  out.number("bias", bias_);
  out.values("dual_coef", {dual_coef_.data(), static_cast<std::size_t>(dual_coef_.size())});
  out.matrix("support", support_);
}

std::unique_ptr<SvcModel> SvcModel::load(TextReader& in, FitInfo info) {
  const double gamma = in.number("gamma");
  const double bias = in.number("bias");
  Vector coef = in.vector("dual_coef");
  Matrix support = in.matrix("support");
  if (support.rows() != coef.size()) in.malformed("support vector count differs from coefficients");
  return std::make_unique<SvcModel>(std::move(info), std::move(support), std::move(coef), bias, gamma);
}

SvcModel fit_svc(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting, const SvcParams& params) {
  if (!(params.C > 0.0)) fail(ErrorCode::InvalidHyperParam, "C must be > 0");
  if (params.gamma < 0.0) fail(ErrorCode::InvalidHyperParam, "gamma must be >= 0 (0 selects scale)");
  const auto w = effective_weights(X, y, weighting);
  const auto n = static_cast<std::size_t>(X.rows());
  if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0) {
    fail(ErrorCode::SingleClass, "SVC needs both classes");
  }

  const double gamma = params.gamma > 0.0 ? params.gamma : scale_gamma(X);
  std::vector<signed char> ys(n);
  std::vector<double> upper(n);
  std::vector<double> p(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = y[i] ? 1 : -1;
    upper[i] = params.C * w[i];
  }
  SmoProblem problem{&X, gamma, p, ys, upper, Vector::Zero(static_cast<Eigen::Index>(n))};
  SmoOptions opts;
  opts.tol = params.tol;
  opts.max_iter = params.max_iter != 0 ? params.max_iter : std::max<std::size_t>(10'000'000, 100 * n);
  opts.cache_mb = params.cache_mb;
  const SmoResult res = solve_smo(problem, opts);

  std::vector<Eigen::Index> sv;
  for (std::size_t i = 0; i < n; ++i) {
    if (res.alpha[static_cast<Eigen::Index>(i)] > 0.0) sv.push_back(static_cast<Eigen::Index>(i));
  }
  Matrix support(static_cast<Eigen::Index>(sv.size()), X.cols());
  Vector coef(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    support.row(static_cast<Eigen::Index>(k)) = X.row(sv[k]);
    coef[static_cast<Eigen::Index>(k)] = res.alpha[sv[k]] * ys[static_cast<std::size_t>(sv[k])];
  }

  FitInfo info;
  info.converged = res.converged;
  info.iterations = res.iterations;
  info.train_rows = n;
  info.class_weights = weighting.classes;
  info.hyperparams = {{"kernel", "rbf"},
                      {"C", fmt::format("{}", params.C)},
                      {"gamma", fmt::format("{}", gamma)},
                      {"tol", fmt::format("{}", params.tol)}};
  return SvcModel(std::move(info), std::move(support), std::move(coef), -res.rho, gamma);
}

}  // namespace gazescreen
