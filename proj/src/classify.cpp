#include "gazescreen/classify.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "gazescreen/error.hpp"
#include "gazescreen/serialize.hpp"

namespace gazescreen {

namespace {

constexpr std::array<std::pair<ModelKind, std::string_view>, 8> kCodes{{
    {ModelKind::NB, "NB"},
    {ModelKind::DT, "DT"},
    {ModelKind::RF, "RF"},
    {ModelKind::SVC, "SVC"},
    {ModelKind::ADA, "ADA"},
    {ModelKind::GPC, "GPC"},
    {ModelKind::LR, "LR"},
    {ModelKind::PERC, "PERC"},
}};

constexpr std::string_view kMagic = "gazescreen-model";
constexpr int kFormatVersion = 1;

}  // namespace

std::string_view to_string(ModelKind kind) {
  for (const auto& [k, code] : kCodes) {
    if (k == kind) return code;
  }
  return "?";
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::NB: return "Naive Bayes";
    case ModelKind::DT: return "Decision Tree";
    case ModelKind::RF: return "Random Forest";
    case ModelKind::SVC: return "SVM";
    case ModelKind::ADA: return "AdaBoost";
    case ModelKind::GPC: return "Gaussian Process Classifier";
    case ModelKind::LR: return "Logistic Regression";
    case ModelKind::PERC: return "Perceptron";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (const auto& [k, code] : kCodes) {
    if (code == upper) return k;
  }
  fail(ErrorCode::InvalidConfig, fmt::format("unknown model '{}' (expected one of NB, DT, RF, SVC, ADA, GPC, LR, PERC)", text));
}

std::vector<double> effective_weights(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n) fail(ErrorCode::LengthMismatch, fmt::format("{} rows but {} labels", n, y.size()));
  if (!weighting.sample.empty() && weighting.sample.size() != n) {
    fail(ErrorCode::LengthMismatch, fmt::format("{} rows but {} sample weights", n, weighting.sample.size()));
  }
  if (n == 0) fail(ErrorCode::EmptyDataset, "no training rows");
  if (!X.allFinite()) fail(ErrorCode::NonFiniteValue, "feature matrix contains NaN or Inf");
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) fail(ErrorCode::NonBinaryLabel, fmt::format("label {} at row {}", y[i], i));
  }

  std::vector<double> w(n, 1.0);
  if (!weighting.sample.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = weighting.sample[i];
      if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidHyperParam, fmt::format("sample weight {} at row {}", v, i));
      w[i] = v;
    }
  }
  if (weighting.classes) {
    const double c0 = weighting.classes->weight_control;
    const double c1 = weighting.classes->weight_concussed;
    if (!(c0 > 0.0) || !(c1 > 0.0) || !std::isfinite(c0) || !std::isfinite(c1)) {
      fail(ErrorCode::InvalidHyperParam, fmt::format("class weights ({}, {}) must be positive", c0, c1));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += y[i] ? c1 : c0;
    const double norm = static_cast<double>(n) / total;
    const double s0 = c0 * norm;
    const double s1 = c1 * norm;
    for (std::size_t i = 0; i < n; ++i) w[i] *= y[i] ? s1 : s0;
  }
  return w;
}

// ---------------------------------------------------------------------------

Vector Classifier::score_rows(const Matrix& X) const {
  Vector out(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) out[r] = score_row(X.row(r).data());
  return out;
}

Vector Classifier::decision_scores(const Matrix& X) const {
  if (static_cast<std::size_t>(X.cols()) != n_features_) {
    fail(ErrorCode::DimensionMismatch, fmt::format("model expects {} features, got {}", n_features_, X.cols()));
  }
  return score_rows(X);
}

std::vector<int> Classifier::predict(const Matrix& X) const {
  const Vector s = decision_scores(X);
  const double thr = threshold();
  std::vector<int> out(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s[i] > thr ? 1 : 0;
  return out;
}

double Classifier::decision_score(std::span<const double> row) const {
  if (row.size() != n_features_) {
    fail(ErrorCode::DimensionMismatch, fmt::format("model expects {} features, got {}", n_features_, row.size()));
  }
  return score_row(row.data());
}

int Classifier::predict_one(std::span<const double> row) const { return decision_score(row) > threshold() ? 1 : 0; }

void Classifier::save(std::ostream& out) const {
  TextWriter w(out);
  w.integer(kMagic, kFormatVersion);
  w.word("kind", to_string(kind()));
  w.integer("features", static_cast<std::int64_t>(n_features_));
  w.word("seed", std::to_string(info_.seed));
  w.integer("converged", info_.converged ? 1 : 0);
  w.integer("iterations", static_cast<std::int64_t>(info_.iterations));
  w.integer("train_rows", static_cast<std::int64_t>(info_.train_rows));
  if (info_.class_weights) {
    const std::array<double, 2> cw{info_.class_weights->weight_control, info_.class_weights->weight_concussed};
    w.values("class_weights", cw);
  } else {
    w.values("class_weights", {});
  }
  w.integer("hyperparams", static_cast<std::int64_t>(info_.hyperparams.size()));
  for (const auto& [k, v] : info_.hyperparams) w.word(k, v);
  save_body(w);
  w.word("end", to_string(kind()));
}

std::unique_ptr<Classifier> load_classifier(std::istream& in, const std::string& source) {
  TextReader r(in, source);
  const auto version = r.integer(kMagic);
  if (version != kFormatVersion) r.malformed(fmt::format("unsupported model format version {}", version));
  const std::string kind_text = r.word("kind");
  const ModelKind kind = parse_model_kind(kind_text);
  const auto n_features = static_cast<std::size_t>(r.integer("features"));

  FitInfo info;
  const std::string seed_text = r.word("seed");
  try {
    info.seed = std::stoull(seed_text);
  } catch (const std::exception&) {
    r.malformed(fmt::format("bad seed '{}'", seed_text));
  }
  info.converged = r.integer("converged") != 0;
  info.iterations = static_cast<std::size_t>(r.integer("iterations"));
  info.train_rows = static_cast<std::size_t>(r.integer("train_rows"));
  const auto cw = r.values("class_weights");
  if (cw.size() == 2) info.class_weights = ClassWeights{cw[0], cw[1]};
  const auto n_hp = r.integer("hyperparams");
  for (std::int64_t i = 0; i < n_hp; ++i) {
    std::string key = r.peek_name();
    info.hyperparams.emplace_back(key, r.word(key));
  }

  std::unique_ptr<Classifier> model;
  switch (kind) {
    case ModelKind::NB: model = NaiveBayesModel::load(r, std::move(info)); break;
    case ModelKind::DT: model = DecisionTreeModel::load(r, std::move(info), n_features); break;
    case ModelKind::RF: model = RandomForestModel::load(r, std::move(info), n_features); break;
    case ModelKind::SVC: model = SvcModel::load(r, std::move(info)); break;
    case ModelKind::ADA: model = AdaBoostModel::load(r, std::move(info), n_features); break;
    case ModelKind::GPC: model = GpcModel::load(r, std::move(info)); break;
    case ModelKind::LR:
    case ModelKind::PERC: model = LinearModel::load(r, kind, std::move(info)); break;
  }
  if (r.word("end") != kind_text) r.malformed("missing end marker");
  if (model->n_features() != n_features) r.malformed("feature count does not match the parameters");
  return model;
}

// ---------------------------------------------------------------------------
// Naive Bayes

NaiveBayesModel::NaiveBayesModel(FitInfo info, std::array<double, 2> log_prior, Matrix means, Matrix variances)
    : Classifier(static_cast<std::size_t>(means.cols()), std::move(info)),
      log_prior_(log_prior),
      means_(std::move(means)),
      variances_(std::move(variances)) {}

double NaiveBayesModel::log_joint(const double* x, int c) const {
  double lp = log_prior_[static_cast<std::size_t>(c)];
  for (Eigen::Index j = 0; j < means_.cols(); ++j) {
    const double var = variances_(c, j);
    const double diff = x[j] - means_(c, j);
    lp -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + diff * diff / var);
  }
  return lp;
}

double NaiveBayesModel::score_row(const double* x) const { return log_joint(x, 1) - log_joint(x, 0); }

void NaiveBayesModel::save_body(TextWriter& out) const {
  out.values("log_prior", log_prior_);
  out.matrix("means", means_);
  out.matrix("variances", variances_);
}

std::unique_ptr<NaiveBayesModel> NaiveBayesModel::load(TextReader& in, FitInfo info) {
  const auto lp = in.values("log_prior");
  if (lp.size() != 2) in.malformed("log_prior needs 2 values");
  Matrix means = in.matrix("means");
  Matrix variances = in.matrix("variances");
  if (means.rows() != 2 || variances.rows() != 2 || means.cols() != variances.cols()) in.malformed("bad NB shapes");
  return std::make_unique<NaiveBayesModel>(std::move(info), std::array<double, 2>{lp[0], lp[1]}, std::move(means),
                                           std::move(variances));
}

NaiveBayesModel fit_naive_bayes(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                                const NaiveBayesParams& params) {
  if (!(params.var_smoothing >= 0.0)) fail(ErrorCode::InvalidHyperParam, "var_smoothing must be >= 0");
  const auto w = effective_weights(X, y, weighting);
  const Eigen::Index d = X.cols();
  const auto n = static_cast<std::size_t>(X.rows());

  std::array<double, 2> mass{0.0, 0.0};
  Matrix means = Matrix::Zero(2, d);
  for (std::size_t i = 0; i < n; ++i) {
    mass[static_cast<std::size_t>(y[i])] += w[i];
    means.row(y[i]) += w[i] * X.row(static_cast<Eigen::Index>(i));
  }
  if (mass[0] == 0.0 || mass[1] == 0.0) fail(ErrorCode::SingleClass, "naive Bayes needs both classes");
  means.row(0) /= mass[0];
  means.row(1) /= mass[1];

  Matrix variances = Matrix::Zero(2, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto diff = X.row(static_cast<Eigen::Index>(i)) - means.row(y[i]);
    variances.row(y[i]) += w[i] * diff.cwiseProduct(diff);
  }
  variances.row(0) /= mass[0];
  variances.row(1) /= mass[1];

  // Smoothing is relative to the largest weighted variance over all rows.
  const double total = mass[0] + mass[1];
  const Eigen::RowVectorXd overall_mean = (mass[0] * means.row(0) + mass[1] * means.row(1)) / total;
  Eigen::RowVectorXd overall_var = Eigen::RowVectorXd::Zero(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto diff = X.row(static_cast<Eigen::Index>(i)) - overall_mean;
    overall_var += w[i] * diff.cwiseProduct(diff);
  }
  overall_var /= total;
  double epsilon = params.var_smoothing * (d > 0 ? overall_var.maxCoeff() : 0.0);
  // All-constant data: any positive floor keeps the densities finite.
  if (epsilon <= 0.0) epsilon = std::max(params.var_smoothing, 1e-300);
  variances.array() += epsilon;

  FitInfo info;
  info.train_rows = n;
  info.class_weights = weighting.classes;
  info.hyperparams = {{"var_smoothing", fmt::format("{}", params.var_smoothing)}};
  return NaiveBayesModel(std::move(info), {std::log(mass[0] / total), std::log(mass[1] / total)}, std::move(means),
                         std::move(variances));
}

// ---------------------------------------------------------------------------

std::unique_ptr<Classifier> fit_model(ModelKind kind, const Matrix& X, std::span<const int> y,
                                      const SampleWeighting& weighting, const ModelParams& params,
                                      std::uint64_t seed) {
  switch (kind) {
    case ModelKind::NB: return std::make_unique<NaiveBayesModel>(fit_naive_bayes(X, y, weighting, params.nb));
    case ModelKind::DT: return std::make_unique<DecisionTreeModel>(fit_decision_tree(X, y, weighting, params.dt));
    case ModelKind::RF:
      return std::make_unique<RandomForestModel>(fit_random_forest(X, y, weighting, params.rf, seed));
    case ModelKind::SVC: return std::make_unique<SvcModel>(fit_svc(X, y, weighting, params.svc));
    case ModelKind::ADA: return std::make_unique<AdaBoostModel>(fit_adaboost(X, y, weighting, params.ada, seed));
    case ModelKind::GPC: return std::make_unique<GpcModel>(fit_gpc(X, y, weighting, params.gpc, seed));
    case ModelKind::LR: return std::make_unique<LinearModel>(fit_logreg(X, y, weighting, params.lr));
    case ModelKind::PERC:
      return std::make_unique<LinearModel>(fit_perceptron(X, y, weighting, params.perc, seed));
  }
  fail(ErrorCode::InvalidConfig, "unknown model kind");
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& X) {
  if (X.rows() == 0) fail(ErrorCode::EmptyDataset, "cannot standardize zero rows");
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean[j]).square().mean();
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& X) const {
  if (X.cols() != mean.size()) {
    fail(ErrorCode::DimensionMismatch, fmt::format("standardizer expects {} features, got {}", mean.size(), X.cols()));
  }
  Matrix out = X;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = (out.row(r) - mean.transpose()).cwiseQuotient(scale.transpose());
  }
  return out;
}

void Standardizer::save(TextWriter& out) const {
  out.values("standardizer_mean", {mean.data(), static_cast<std::size_t>(mean.size())});
  out.values("standardizer_scale", {scale.data(), static_cast<std::size_t>(scale.size())});
}

Standardizer Standardizer::load(TextReader& in) {
  Standardizer s;
  s.mean = in.vector("standardizer_mean");
  s.scale = in.vector("standardizer_scale");
  if (s.mean.size() != s.scale.size()) in.malformed("standardizer mean/scale length mismatch");
  return s;
}

}  // namespace gazescreen
