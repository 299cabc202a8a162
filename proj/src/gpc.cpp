#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/lbfgs.hpp"
#include "gazescreen/serialize.hpp"
#include "gazescreen/smo.hpp"

namespace gazescreen {
namespace {

using Dense = Eigen::MatrixXd;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

Dense squared_distances(const Matrix& X) {
  const Vector sq = X.rowwise().squaredNorm();
  Dense D = -2.0 * (X * X.transpose());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    for (Eigen::Index j = 0; j < D.cols(); ++j) D(i, j) = std::max(0.0, D(i, j) + sq[i] + sq[j]);
    D(i, i) = 0.0;
  }
  return D;
}

Dense kernel_from_distances(const Dense& D2, double length_scale, double amplitude) {
  return amplitude * (-D2.array() / (2.0 * length_scale * length_scale)).exp().matrix();
}

// Lower Cholesky factor of B, adding up to three 1e-8 jitters.
Eigen::LLT<Dense> factor(Dense B) {
  Eigen::LLT<Dense> llt(B);
  for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
    if (attempt == 3) fail(ErrorCode::KernelNotPD, fmt::format("I + W^1/2 K W^1/2 not positive definite ({} rows)", B.rows()));
    B.diagonal().array() += 1e-8;
    llt.compute(B);
  }
  return llt;
}

struct LaplaceMode {
  Vector f;
  Vector pi;
  Vector sqrt_w;
  Eigen::LLT<Dense> llt;
  double log_marginal = 0.0;
  int iterations = 0;
  bool converged = false;
};

Eigen::LLT<Dense> factor_b(const Dense& K, const Vector& sqrt_w) {
  Dense B = sqrt_w.asDiagonal() * K * sqrt_w.asDiagonal();
  B.diagonal().array() += 1.0;
  return factor(std::move(B));
}

double psi(const Vector& a, const Vector& f, const Vector& s) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) lp += log_sigmoid(s[i] * f[i]);
  return -0.5 * a.dot(f) + lp;
}

// Newton iterations for the posterior mode of the latent function.
LaplaceMode find_mode(const Dense& K, const Vector& t, Vector f, int max_iter, double tol) {
  const Eigen::Index n = K.rows();
  const Vector s = 2.0 * t.array() - 1.0;
  LaplaceMode m;
  Vector a = Vector::Zero(n);
  double objective = -std::numeric_limits<double>::infinity();
  if (f.size() != n) {
    f = Vector::Zero(n);
    objective = psi(a, f, s);
  }

  for (int it = 0; it < max_iter; ++it) {
    const Vector pi = f.unaryExpr([](double v) { return sigmoid(v); });
    const Vector w = pi.array() * (1.0 - pi.array());
    const Vector sw = w.array().sqrt();
    const auto llt = factor_b(K, sw);
    const Vector b = w.cwiseProduct(f) + (t - pi);
    Vector a_new = b - sw.cwiseProduct(llt.solve(sw.cwiseProduct(K * b)));
    Vector f_new = K * a_new;
    double obj_new = psi(a_new, f_new, s);
    // Damped step if the full Newton step lowers the objective by more than
    // rounding; near the mode a rounding-level dip must not stall the update.
    const double slack = 1e-12 * (1.0 + std::abs(objective));
    for (int halve = 0; halve < 20 && obj_new < objective - slack; ++halve) {
      a_new = 0.5 * (a_new + a);
      f_new = K * a_new;
      obj_new = psi(a_new, f_new, s);
    }
    const double change = std::abs(obj_new - objective);
    a = std::move(a_new);
    f = std::move(f_new);
    objective = obj_new;
    m.iterations = it + 1;
    if (change / static_cast<double>(n) < tol) {
      m.converged = true;
      break;
    }
  }

  m.pi = f.unaryExpr([](double v) { return sigmoid(v); });
  m.sqrt_w = (m.pi.array() * (1.0 - m.pi.array())).sqrt();
  m.llt = factor_b(K, m.sqrt_w);
  const Dense L = m.llt.matrixL();
  m.log_marginal = objective - L.diagonal().array().log().sum();
  m.f = std::move(f);
  return m;
}

Vector labels_as_targets(std::span<const int> y) {
  Vector t(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) t[static_cast<Eigen::Index>(i)] = y[i] ? 1.0 : 0.0;
  return t;
}

// Log marginal likelihood and its gradient w.r.t. (log l, log amplitude).
double log_marginal_with_grad(const Dense& D2, const Vector& t, double length_scale, double amplitude,
                              const GpcParams& params, Vector* warm, Vector& grad) {
  const Dense K = kernel_from_distances(D2, length_scale, amplitude);
  LaplaceMode m = find_mode(K, t, warm ? *warm : Vector(), params.max_iter_predict, params.newton_tol);
  if (warm) *warm = m.f;

  const Vector a = t - m.pi;
  const Dense L = m.llt.matrixL();
  // Z = W^1/2 B^-1 W^1/2
  Dense R = m.sqrt_w.asDiagonal();
  L.triangularView<Eigen::Lower>().solveInPlace(R);
  const Dense Z = R.transpose() * R;
  Dense C = m.sqrt_w.asDiagonal() * K;
  L.triangularView<Eigen::Lower>().solveInPlace(C);
  // Derivative of W along f, which is minus the third derivative of log p.
  const Vector dw = m.pi.array() * (1.0 - m.pi.array()) * (1.0 - 2.0 * m.pi.array());
  const Vector s2 = -0.5 * (K.diagonal() - C.colwise().squaredNorm().transpose()).cwiseProduct(dw);

  grad.resize(2);
  const Dense dK_dlog_l = K.cwiseProduct(D2) / (length_scale * length_scale);
  const Dense* derivs[2] = {&dK_dlog_l, &K};
  for (int j = 0; j < 2; ++j) {
    const Dense& Cj = *derivs[j];
    const double s1 = 0.5 * a.dot(Cj * a) - 0.5 * Z.cwiseProduct(Cj).sum();
    const Vector b = Cj * a;
    const Vector s3 = b - K * (Z * b);
    grad[j] = s1 + s2.dot(s3);
  }
  return m.log_marginal;
}

void check_gpc_params(const GpcParams& p) {
  if (!(p.length_scale > 0.0) || !(p.amplitude > 0.0)) fail(ErrorCode::InvalidHyperParam, "GPC length_scale and amplitude must be > 0");
  if (!(p.bound_low > 0.0) || !(p.bound_high > p.bound_low)) fail(ErrorCode::InvalidHyperParam, "GPC bounds must satisfy 0 < low < high");
  if (p.max_iter_predict < 1) fail(ErrorCode::InvalidHyperParam, "max_iter_predict must be >= 1");
  if (!(p.newton_tol > 0.0)) fail(ErrorCode::InvalidHyperParam, "newton_tol must be > 0");
}

}  // namespace

double gpc_negative_log_marginal(const Matrix& X, std::span<const int> y, const Vector& theta, Vector& grad,
                                 const GpcParams& params) {
  if (theta.size() != 2) fail(ErrorCode::DimensionMismatch, "GPC theta is (log length_scale, log amplitude)");
  if (y.size() != static_cast<std::size_t>(X.rows())) fail(ErrorCode::LengthMismatch, "rows and labels differ in length");
  const double lml = log_marginal_with_grad(squared_distances(X), labels_as_targets(y), std::exp(theta[0]),
                                            std::exp(theta[1]), params, nullptr, grad);
  grad = -grad;
  return -lml;
}

// ---------------------------------------------------------------------------

GpcModel::GpcModel(FitInfo info, Matrix X, std::vector<int> y, double length_scale, double amplitude,
                   const GpcParams& params)
    : Classifier(static_cast<std::size_t>(X.cols()), std::move(info)),
      X_(std::move(X)),
      y_(std::move(y)),
      length_scale_(length_scale),
      amplitude_(amplitude),
      max_iter_predict_(params.max_iter_predict),
      newton_tol_(params.newton_tol) {
  const Dense K = kernel_from_distances(squared_distances(X_), length_scale_, amplitude_);
  const Vector t = labels_as_targets(y_);
  LaplaceMode m = find_mode(K, t, Vector(), max_iter_predict_, newton_tol_);
  residual_ = t - m.pi;
  sqrt_w_ = m.sqrt_w;
  chol_ = m.llt.matrixL();
  log_marginal_ = m.log_marginal;
}

double GpcModel::score_row(const double* x) const {
  Matrix row = Eigen::Map<const Eigen::RowVectorXd>(x, X_.cols());
  return score_rows(row)[0];
}

Vector GpcModel::score_rows(const Matrix& X) const {
  Vector out(X.rows());
  const double gamma = 1.0 / (2.0 * length_scale_ * length_scale_);
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, X.rows() - r0);
    const Dense Ks = amplitude_ * rbf_matrix(X.middleRows(r0, rows), X_, gamma);
    const Vector mean = Ks * residual_;
    Dense V = sqrt_w_.asDiagonal() * Ks.transpose();
    chol_.triangularView<Eigen::Lower>().solveInPlace(V);
    const Vector var = (amplitude_ - V.colwise().squaredNorm().transpose().array()).max(0.0);
    for (Eigen::Index k = 0; k < rows; ++k) {
      const double kappa = 1.0 / std::sqrt(1.0 + std::numbers::pi * var[k] / 8.0);
      out[r0 + k] = sigmoid(kappa * mean[k]);
    }
  }
  return out;
}

void GpcModel::save_body(TextWriter& out) const {
  out.number("length_scale", length_scale_);
  out.number("amplitude", amplitude_);
  out.integer("max_iter_predict", max_iter_predict_);
  out.number("newton_tol", newton_tol_);
  std::vector<double> labels(y_.begin(), y_.end());
  out.values("labels", labels);
  out.matrix("train", X_);
}

std::unique_ptr<GpcModel> GpcModel::load(TextReader& in, FitInfo info) {
  const double length_scale = in.number("length_scale");
  const double amplitude = in.number("amplitude");
  GpcParams params;
  params.max_iter_predict = static_cast<int>(in.integer("max_iter_predict"));
  params.newton_tol = in.number("newton_tol");
  const auto labels = in.values("labels");
  Matrix X = in.matrix("train");
  if (static_cast<std::size_t>(X.rows()) != labels.size()) in.malformed("GPC label count differs from training rows");
  std::vector<int> y;
  y.reserve(labels.size());
  for (double v : labels) y.push_back(v != 0.0 ? 1 : 0);
  return std::make_unique<GpcModel>(std::move(info), std::move(X), std::move(y), length_scale, amplitude, params);
}

GpcModel fit_gpc(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting, const GpcParams& params,
                 std::uint64_t seed) {
  check_gpc_params(params);
  const auto w = effective_weights(X, y, weighting);
  if (std::any_of(w.begin(), w.end(), [](double v) { return v != 1.0; })) {
    fail(ErrorCode::InvalidHyperParam, "GPC does not take sample or class weights; train it on a balanced subset");
  }
  const auto ones = std::count(y.begin(), y.end(), 1);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(y.size())) fail(ErrorCode::SingleClass, "GPC needs both classes");
  if (params.max_train != 0 && y.size() > params.max_train) {
    fail(ErrorCode::InvalidHyperParam,
         fmt::format("GPC training set of {} rows exceeds max_train = {}", y.size(), params.max_train));
  }

  double length_scale = params.length_scale;
  double amplitude = params.amplitude;
  FitInfo info;
  info.seed = seed;
  info.train_rows = y.size();
  if (params.optimize) {
    const Dense D2 = squared_distances(X);
    const Vector t = labels_as_targets(y);
    const double lo = std::log(params.bound_low);
    const double hi = std::log(params.bound_high);
    Vector warm;
    const Objective objective = [&](const Vector& theta, Vector& grad) {
      if ((theta.array() < lo).any() || (theta.array() > hi).any()) return std::numeric_limits<double>::infinity();
      const double lml =
          log_marginal_with_grad(D2, t, std::exp(theta[0]), std::exp(theta[1]), params, &warm, grad);
      grad = -grad;
      return -lml;
    };
    LbfgsOptions opts;
    opts.max_iter = params.optimizer_max_iter;
    opts.gtol = 1e-5;
    opts.ftol = 2.220446049250313e-09;
    const Vector theta0 = (Vector(2) << std::log(length_scale), std::log(amplitude)).finished();
    const auto res = minimize_lbfgs(objective, theta0, opts);
    length_scale = std::exp(res.x[0]);
    amplitude = std::exp(res.x[1]);
    info.converged = res.converged;
    info.iterations = static_cast<std::size_t>(res.iterations);
  }
  info.hyperparams = {{"kernel", "rbf"},
                      {"optimizer", params.optimize ? "lbfgs" : "none"},
                      {"length_scale", fmt::format("{}", length_scale)},
                      {"amplitude", fmt::format("{}", amplitude)},
                      {"max_iter_predict", std::to_string(params.max_iter_predict)}};
  std::vector<int> labels(y.begin(), y.end());
  return GpcModel(std::move(info), X, std::move(labels), length_scale, amplitude, params);
}

}  // namespace gazescreen
