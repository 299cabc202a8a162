#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gazescreen/gaze_data.hpp"
#include "gazescreen/matrix.hpp"

namespace gazescreen {

class TextWriter;
class TextReader;

enum class ModelKind { NB, DT, RF, SVC, ADA, GPC, LR, PERC };

/// Column order of the evaluation tables.
inline constexpr std::array<ModelKind, 8> kReportOrder{ModelKind::RF,  ModelKind::ADA, ModelKind::GPC,
                                                       ModelKind::DT,  ModelKind::NB,  ModelKind::SVC,
                                                       ModelKind::LR,  ModelKind::PERC};

std::string_view to_string(ModelKind kind);
std::string_view display_name(ModelKind kind);
/// Accepts the short code in any case ("rf", "RF").
ModelKind parse_model_kind(std::string_view text);

/// Per-row weights. Class weights are rescaled to mean 1 over the training
/// rows before use, so multiplying both by a constant changes nothing.
struct SampleWeighting {
  std::span<const double> sample;  // empty = all ones
  std::optional<ClassWeights> classes;
};

/// Checks shapes, labels and finiteness; returns the effective row weights.
std::vector<double> effective_weights(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting);

// ---------------------------------------------------------------------------
// Hyperparameters

struct NaiveBayesParams {
  double var_smoothing = 1e-9;
};

struct TreeParams {
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = 0;     // 0 = unlimited
  std::size_t max_features = 0;  // 0 = all features
};

struct ForestParams {
  std::size_t n_estimators = 100;
  std::size_t max_features = 0;  // 0 = floor(sqrt(d))
  bool bootstrap = true;
  TreeParams tree;
  unsigned threads = 1;
};

struct SvcParams {
  double C = 1.0;
  double gamma = 0.0;  // 0 = 1 / (d * mean per-feature variance)
  double tol = 1e-3;
  std::size_t max_iter = 0;  // 0 = max(10^7, 100 n)
  double cache_mb = 256.0;
};

struct AdaBoostParams {
  std::size_t n_estimators = 50;
  double learning_rate = 1.0;
  std::size_t base_depth = 1;
};

struct GpcParams {
  double length_scale = 1.0;
  double amplitude = 1.0;  // signal variance
  bool optimize = true;
  double bound_low = 1e-5;
  double bound_high = 1e5;
  int optimizer_max_iter = 100;
  int max_iter_predict = 100;  // Newton cap for the latent mode
  double newton_tol = 1e-8;    // on |delta objective| / n
  std::size_t max_train = 2000;
};

struct LogRegParams {
  double C = 1.0;  // inverse L2 strength
  double tol = 1e-4;
  int max_iter = 100;
};

struct PerceptronParams {
  double alpha = 1e-4;
  std::size_t max_iter = 100;
  double eta0 = 1.0;
  double tol = 1e-3;
  bool early_stopping = true;
  double validation_fraction = 0.1;
  std::size_t n_iter_no_change = 5;
  bool shuffle = true;
};

struct ModelParams {
  NaiveBayesParams nb;
  TreeParams dt;
  ForestParams rf;
  SvcParams svc;
  AdaBoostParams ada;
  GpcParams gpc;
  LogRegParams lr;
  PerceptronParams perc;
};

/// Fit metadata carried with every model and into the model file.
struct FitInfo {
  std::uint64_t seed = 0;
  bool converged = true;
  std::size_t iterations = 0;
  std::size_t train_rows = 0;
  std::optional<ClassWeights> class_weights;
  std::vector<std::pair<std::string, std::string>> hyperparams;
};

// ---------------------------------------------------------------------------
// Uniform model contract

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  std::size_t n_features() const { return n_features_; }
  const FitInfo& info() const { return info_; }

  /// predict(x) = 1 exactly when decision_score(x) > threshold(); a score
  /// on the threshold goes to class 0.
  virtual double threshold() const { return 0.0; }

  Vector decision_scores(const Matrix& X) const;
  std::vector<int> predict(const Matrix& X) const;
  double decision_score(std::span<const double> row) const;
  int predict_one(std::span<const double> row) const;

  void save(std::ostream& out) const;

 protected:
  Classifier(std::size_t n_features, FitInfo info) : n_features_(n_features), info_(std::move(info)) {}

  virtual double score_row(const double* x) const = 0;
  virtual Vector score_rows(const Matrix& X) const;
  virtual void save_body(TextWriter& out) const = 0;

 private:
  std::size_t n_features_;
  FitInfo info_;
};

std::unique_ptr<Classifier> load_classifier(std::istream& in, const std::string& source = "<model>");

// ---------------------------------------------------------------------------
// Naive Bayes

class NaiveBayesModel final : public Classifier {
 public:
  NaiveBayesModel(FitInfo info, std::array<double, 2> log_prior, Matrix means, Matrix variances);

  ModelKind kind() const override { return ModelKind::NB; }
  const std::array<double, 2>& log_prior() const { return log_prior_; }
  /// Row c holds class c.
  const Matrix& means() const { return means_; }
  const Matrix& variances() const { return variances_; }
  /// Unnormalized log joint log P(c) + log p(x | c).
  double log_joint(const double* x, int c) const;

  static std::unique_ptr<NaiveBayesModel> load(TextReader& in, FitInfo info);

 protected:
  double score_row(const double* x) const override;
  void save_body(TextWriter& out) const override;

 private:
  std::array<double, 2> log_prior_;
  Matrix means_;
  Matrix variances_;
};

NaiveBayesModel fit_naive_bayes(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                                const NaiveBayesParams& params = {});

// ---------------------------------------------------------------------------
// CART

/// Weighted gini of a node, 1 - sum_c p_c^2.
double gini_impurity(std::span<const int> labels, std::span<const double> weights = {});

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight0 = 0.0;
  double weight1 = 0.0;
  std::uint32_t depth = 0;
  std::uint32_t samples = 0;

  bool is_leaf() const { return feature < 0; }
  /// Weighted class-1 fraction; above 0.5 votes class 1.
  double proba() const { return weight1 / (weight0 + weight1); }
};

/// Flat binary tree; node 0 is the root, x[feature] <= threshold goes left.
class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& leaf(const double* x) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;

  void save(TextWriter& out) const;
  static Tree load(TextReader& in);

 private:
  std::vector<TreeNode> nodes_;
};

/// Grows one tree on the rows with positive weight. `rng_seed` drives the
/// per-node feature draw when params.max_features < d.
Tree grow_tree(const Matrix& X, std::span<const int> y, std::span<const double> w, const TreeParams& params,
               std::uint64_t rng_seed = 0);

class DecisionTreeModel final : public Classifier {
 public:
  DecisionTreeModel(FitInfo info, std::size_t n_features, Tree tree);

  ModelKind kind() const override { return ModelKind::DT; }
  double threshold() const override { return 0.5; }
  const Tree& tree() const { return tree_; }

  static std::unique_ptr<DecisionTreeModel> load(TextReader& in, FitInfo info, std::size_t n_features);

 protected:
  double score_row(const double* x) const override;
  void save_body(TextWriter& out) const override;

 private:
  Tree tree_;
};

DecisionTreeModel fit_decision_tree(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                                    const TreeParams& params = {});

class RandomForestModel final : public Classifier {
 public:
  RandomForestModel(FitInfo info, std::size_t n_features, std::vector<Tree> trees);

  ModelKind kind() const override { return ModelKind::RF; }
  /// Score is the fraction of trees voting class 1; a split vote is class 0.
  double threshold() const override { return 0.5; }
  const std::vector<Tree>& trees() const { return trees_; }

  static std::unique_ptr<RandomForestModel> load(TextReader& in, FitInfo info, std::size_t n_features);

 protected:
  double score_row(const double* x) const override;
  void save_body(TextWriter& out) const override;

 private:
  std::vector<Tree> trees_;
};

RandomForestModel fit_random_forest(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                                    const ForestParams& params = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// AdaBoost

/// One reweighting step: misclassified rows are multiplied by exp(alpha),
/// then all weights are renormalized to sum 1.
void adaboost_reweight(std::span<double> weights, std::span<const bool> misclassified, double alpha);

class AdaBoostModel final : public Classifier {
 public:
  AdaBoostModel(FitInfo info, std::size_t n_features, std::vector<Tree> stumps, std::vector<double> alphas);

  ModelKind kind() const override { return ModelKind::ADA; }
  const std::vector<Tree>& stumps() const { return stumps_; }
  const std::vector<double>& alphas() const { return alphas_; }

  static std::unique_ptr<AdaBoostModel> load(TextReader& in, FitInfo info, std::size_t n_features);

 protected:
  double score_row(const double* x) const override;
  void save_body(TextWriter& out) const override;

 private:
  std::vector<Tree> stumps_;
  std::vector<double> alphas_;
};

AdaBoostModel fit_adaboost(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                           const AdaBoostParams& params = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Kernel machines

/// 1 / (d * mean per-feature variance); 1 when every feature is constant.
double scale_gamma(const Matrix& X);

class SvcModel final : public Classifier {
 public:
  SvcModel(FitInfo info, Matrix support, Vector dual_coef, double bias, double gamma);

  ModelKind kind() const override { return ModelKind::SVC; }
  const Matrix& support_vectors() const { return support_; }
  /// alpha_i * y_i with y in {-1, +1}.
  const Vector& dual_coef() const { return dual_coef_; }
  double bias() const { return bias_; }
  double gamma() const { return gamma_; }

  static std::unique_ptr<SvcModel> load(TextReader& in, FitInfo info);

 protected:
  double score_row(const double* x) const override;
  Vector score_rows(const Matrix& X) const override;
  void save_body(TextWriter& out) const override;

 private:
  Matrix support_;
  Vector dual_coef_;
  double bias_;
  double gamma_;
};

SvcModel fit_svc(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                 const SvcParams& params = {});

/// Negative Laplace log marginal likelihood of a binary GP classifier with
/// K = amplitude * exp(-|x - x'|^2 / (2 length_scale^2)), theta =
/// (log length_scale, log amplitude). Writes the gradient w.r.t. theta.
double gpc_negative_log_marginal(const Matrix& X, std::span<const int> y, const Vector& theta, Vector& grad,
                                 const GpcParams& params = {});

class GpcModel final : public Classifier {
 public:
  GpcModel(FitInfo info, Matrix X, std::vector<int> y, double length_scale, double amplitude,
           const GpcParams& params);

  ModelKind kind() const override { return ModelKind::GPC; }
  /// Score is the predictive class-1 probability.
  double threshold() const override { return 0.5; }
  double length_scale() const { return length_scale_; }
  double amplitude() const { return amplitude_; }
  double log_marginal_likelihood() const { return log_marginal_; }

  static std::unique_ptr<GpcModel> load(TextReader& in, FitInfo info);

 protected:
  double score_row(const double* x) const override;
  Vector score_rows(const Matrix& X) const override;
  void save_body(TextWriter& out) const override;

 private:
  Matrix X_;
  std::vector<int> y_;
  double length_scale_;
  double amplitude_;
  int max_iter_predict_;
  double newton_tol_;
  Vector residual_;  // t - pi at the mode
  Vector sqrt_w_;
  Matrix chol_;      // lower factor of I + W^1/2 K W^1/2
  double log_marginal_ = 0.0;
};

GpcModel fit_gpc(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                 const GpcParams& params = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Linear models

/// Weighted logistic loss times C plus 0.5 |beta|^2 (intercept unpenalized).
/// `params` holds (intercept, beta...). Writes the gradient.
double logreg_objective(const Matrix& X, std::span<const int> y, std::span<const double> w, double C,
                        const Vector& params, Vector& grad);

class LinearModel final : public Classifier {
 public:
  LinearModel(ModelKind kind, FitInfo info, Vector coef, double intercept);

  ModelKind kind() const override { return kind_; }
  const Vector& coef() const { return coef_; }
  double intercept() const { return intercept_; }

  static std::unique_ptr<LinearModel> load(TextReader& in, ModelKind kind, FitInfo info);

 protected:
  double score_row(const double* x) const override;
  Vector score_rows(const Matrix& X) const override;
  void save_body(TextWriter& out) const override;

 private:
  ModelKind kind_;
  Vector coef_;
  double intercept_;
};

LinearModel fit_logreg(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                       const LogRegParams& params = {});
LinearModel fit_perceptron(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting = {},
                           const PerceptronParams& params = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

std::unique_ptr<Classifier> fit_model(ModelKind kind, const Matrix& X, std::span<const int> y,
                                      const SampleWeighting& weighting, const ModelParams& params,
                                      std::uint64_t seed);

/// Column-wise z-scoring fitted on training rows; constant columns keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& X);
  Matrix transform(const Matrix& X) const;

  void save(TextWriter& out) const;
  static Standardizer load(TextReader& in);
};

}  // namespace gazescreen
