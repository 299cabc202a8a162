#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/lbfgs.hpp"
#include "gazescreen/rng.hpp"
#include "gazescreen/serialize.hpp"

namespace gazescreen {
namespace {

// log(1 + exp(u)) without overflow.
double log1pexp(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_both_classes(std::span<const int> y, const char* what) {
  const auto ones = std::count(y.begin(), y.end(), 1);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(y.size())) fail(ErrorCode::SingleClass, fmt::format("{} needs both classes", what));
}

}  // namespace

double logreg_objective(const Matrix& X, std::span<const int> y, std::span<const double> w, double C,
                        const Vector& params, Vector& grad) {
  const Eigen::Index d = X.cols();
  if (params.size() != d + 1) fail(ErrorCode::DimensionMismatch, "logistic parameters must be intercept + one per feature");
  const double b = params[0];
  const auto beta = params.tail(d);
  const Vector z = (X * beta).array() + b;

  Vector resid(X.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double wi = w.empty() ? 1.0 : w[k];
    const double s = y[k] ? 1.0 : -1.0;
    loss += wi * log1pexp(-s * z[i]);
    resid[i] = wi * (sigmoid(z[i]) - static_cast<double>(y[k]));
  }
  grad.resize(d + 1);
  grad[0] = C * resid.sum();
  grad.tail(d) = C * (X.transpose() * resid) + beta;
  return C * loss + 0.5 * beta.squaredNorm();
}

// ---------------------------------------------------------------------------

LinearModel::LinearModel(ModelKind kind, FitInfo info, Vector coef, double intercept)
    : Classifier(static_cast<std::size_t>(coef.size()), std::move(info)),
      kind_(kind),
      coef_(std::move(coef)),
      intercept_(intercept) {}

double LinearModel::score_row(const double* x) const {
  return intercept_ + Eigen::Map<const Vector>(x, coef_.size()).dot(coef_);
}

Vector LinearModel::score_rows(const Matrix& X) const { return (X * coef_).array() + intercept_; }

void LinearModel::save_body(TextWriter& out) const {
  out.number("intercept", intercept_);
  out.values("coef", {coef_.data(), static_cast<std::size_t>(coef_.size())});
}

std::unique_ptr<LinearModel> LinearModel::load(TextReader& in, ModelKind kind, FitInfo info) {
  const double intercept = in.number("intercept");
  Vector coef = in.vector("coef");
  return std::make_unique<LinearModel>(kind, std::move(info), std::move(coef), intercept);
}

LinearModel fit_logreg(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                       const LogRegParams& params) {
  if (!(params.C > 0.0)) fail(ErrorCode::InvalidHyperParam, "C must be > 0");
  if (!(params.tol > 0.0)) fail(ErrorCode::InvalidHyperParam, "tol must be > 0");
  if (params.max_iter < 1) fail(ErrorCode::InvalidHyperParam, "max_iter must be >= 1");
  const auto w = effective_weights(X, y, weighting);
  require_both_classes(y, "logistic regression");

  const Objective objective = [&](const Vector& theta, Vector& grad) {
    return logreg_objective(X, y, w, params.C, theta, grad);
  };
  LbfgsOptions opts;
  opts.gtol = params.tol;
  opts.max_iter = params.max_iter;
  const auto res = minimize_lbfgs(objective, Vector::Zero(X.cols() + 1), opts);

  FitInfo info;
  info.converged = res.converged;
  info.iterations = static_cast<std::size_t>(res.iterations);
  info.train_rows = y.size();
  info.class_weights = weighting.classes;
  info.hyperparams = {{"penalty", "l2"},
                      {"C", fmt::format("{}", params.C)},
                      {"tol", fmt::format("{}", params.tol)},
                      {"max_iter", std::to_string(params.max_iter)}};
  return LinearModel(ModelKind::LR, std::move(info), res.x.tail(X.cols()), res.x[0]);
}

// ---------------------------------------------------------------------------

LinearModel fit_perceptron(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                           const PerceptronParams& params, std::uint64_t seed) {
  if (!(params.eta0 > 0.0)) fail(ErrorCode::InvalidHyperParam, "eta0 must be > 0");
  if (!(params.alpha >= 0.0)) fail(ErrorCode::InvalidHyperParam, "alpha must be >= 0");
  if (params.max_iter < 1) fail(ErrorCode::InvalidHyperParam, "max_iter must be >= 1");
  if (params.early_stopping && !(params.validation_fraction > 0.0 && params.validation_fraction < 1.0)) {
    fail(ErrorCode::InvalidHyperParam, "validation_fraction must lie in (0, 1)");
  }
  const auto w = effective_weights(X, y, weighting);
  require_both_classes(y, "perceptron");
  const auto n = static_cast<std::size_t>(X.rows());
  Rng rng(seed);

  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  if (params.early_stopping) {
    // Stratified hold-out drawn from the fit stream.
    for (int c = 0; c < 2; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] == c) members.push_back(i);
      }
      std::shuffle(members.begin(), members.end(), rng);
      auto held = static_cast<std::size_t>(std::llround(params.validation_fraction * static_cast<double>(members.size())));
      held = std::min(held, members.size() - 1);
      validation.insert(validation.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(held));
      train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(held), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(validation.begin(), validation.end());
    if (validation.empty()) fail(ErrorCode::InsufficientClassSamples, "too few rows for a perceptron validation split");
  } else {
    train.resize(n);
    std::iota(train.begin(), train.end(), 0);
  }

  const Eigen::Index d = X.cols();
  Vector coef = Vector::Zero(d);
  double intercept = 0.0;
  const double shrink = std::max(0.0, 1.0 - params.eta0 * params.alpha);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t epochs = 0;
  bool converged = false;

  for (std::size_t epoch = 0; epoch < params.max_iter; ++epoch) {
    if (params.shuffle) std::shuffle(train.begin(), train.end(), rng);
    std::size_t mistakes = 0;
    for (std::size_t i : train) {
      const auto row = X.row(static_cast<Eigen::Index>(i));
      const double s = y[i] ? 1.0 : -1.0;
      const bool wrong = s * (row.dot(coef) + intercept) <= 0.0;
      if (params.alpha > 0.0) coef *= shrink;
      if (wrong) {
        const double step = params.eta0 * w[i] * s;
        coef += step * row.transpose();
        intercept += step;
        ++mistakes;
      }
    }
    epochs = epoch + 1;

    if (params.early_stopping) {
      double loss = 0.0;
      double mass = 0.0;
      for (std::size_t i : validation) {
        const double s = y[i] ? 1.0 : -1.0;
        const double margin = s * (X.row(static_cast<Eigen::Index>(i)).dot(coef) + intercept);
        loss += w[i] * std::max(0.0, -margin);
        mass += w[i];
      }
      loss /= mass;
      if (loss > best_loss - params.tol) {
        ++stale;
      } else {
        stale = 0;
      }
      best_loss = std::min(best_loss, loss);
      if (stale >= params.n_iter_no_change) {
        converged = true;
        break;
      }
    } else if (mistakes == 0) {
      converged = true;
      break;
    }
  }

  FitInfo info;
  info.seed = seed;
  info.converged = converged;
  info.iterations = epochs;
  info.train_rows = n;
  info.class_weights = weighting.classes;
  info.hyperparams = {{"alpha", fmt::format("{}", params.alpha)},
                      {"eta0", fmt::format("{}", params.eta0)},
                      {"max_iter", std::to_string(params.max_iter)},
                      {"tol", fmt::format("{}", params.tol)},
                      {"early_stopping", params.early_stopping ? "true" : "false"},
                      {"validation_fraction", fmt::format("{}", params.validation_fraction)}};
  return LinearModel(ModelKind::PERC, std::move(info), std::move(coef), intercept);
}

}  // namespace gazescreen
