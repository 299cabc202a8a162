#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/rng.hpp"
#include "gazescreen/serialize.hpp"

namespace gazescreen {

double gini_impurity(std::span<const int> labels, std::span<const double> weights) {
  if (labels.empty()) fail(ErrorCode::EmptyNode, "gini of an empty node");
  if (!weights.empty() && weights.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch, fmt::format("{} labels but {} weights", labels.size(), weights.size()));
  }
  double w0 = 0.0;
  double w1 = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    (labels[i] ? w1 : w0) += w;
  }
  const double total = w0 + w1;
  if (!(total > 0.0)) fail(ErrorCode::EmptyNode, "gini of a node with zero weight");
  const double p0 = w0 / total;
  const double p1 = w1 / total;
  return 1.0 - (p0 * p0 + p1 * p1);
}

// ---------------------------------------------------------------------------

const TreeNode& Tree::leaf(const double* x) const {
  const TreeNode* node = &nodes_.front();
  while (!node->is_leaf()) node = &nodes_[static_cast<std::size_t>(x[node->feature] <= node->threshold ? node->left : node->right)];
  return *node;
}

std::size_t Tree::depth() const {
  std::size_t d = 0;
  for (const auto& n : nodes_) d = std::max<std::size_t>(d, n.depth);
  return d;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void Tree::save(TextWriter& out) const {
  out.integer("nodes", static_cast<std::int64_t>(nodes_.size()));
  for (const auto& n : nodes_) {
    const std::array<double, 8> v{static_cast<double>(n.feature), n.threshold, static_cast<double>(n.left),
                                  static_cast<double>(n.right), n.weight0, n.weight1,
                                  static_cast<double>(n.depth), static_cast<double>(n.samples)};
    out.values("n", v);
  }
}

Tree Tree::load(TextReader& in) {
  const auto count = in.integer("nodes");
  if (count < 1) in.malformed("tree without nodes");
  std::vector<TreeNode> nodes(static_cast<std::size_t>(count));
  for (auto& n : nodes) {
    const auto v = in.values("n");
    if (v.size() != 8) in.malformed("tree node needs 8 values");
    n.feature = static_cast<int>(v[0]);
    n.threshold = v[1];
    n.left = static_cast<int>(v[2]);
    n.right = static_cast<int>(v[3]);
    n.weight0 = v[4];
    n.weight1 = v[5];
    n.depth = static_cast<std::uint32_t>(v[6]);
    n.samples = static_cast<std::uint32_t>(v[7]);
  }
  for (const auto& n : nodes) {
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
      in.malformed("tree child index out of range");
    }
  }
  return Tree(std::move(nodes));
}

namespace {

struct Candidate {
  double impurity = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const int> y, std::span<const double> w, const TreeParams& params,
              std::uint64_t seed)
      : X_(X), y_(y), w_(w), params_(params), rng_(seed) {
    const auto d = static_cast<std::size_t>(X.cols());
    mtry_ = params.max_features == 0 || params.max_features >= d ? d : params.max_features;
    order_.resize(d);
    std::iota(order_.begin(), order_.end(), 0);
  }

  Tree build() {
    for (std::size_t i = 0; i < static_cast<std::size_t>(X_.rows()); ++i) {
      if (w_[i] > 0.0) rows_.push_back(static_cast<std::uint32_t>(i));
    }
    if (rows_.empty()) fail(ErrorCode::EmptyNode, "no rows with positive weight");
    nodes_.push_back(make_node(0, rows_.size(), 0));
    struct Pending {
      int id;
      std::size_t begin, end;
    };
    std::vector<Pending> stack{{0, 0, rows_.size()}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      const auto best = find_split(nodes_[static_cast<std::size_t>(p.id)], p.begin, p.end);
      if (best.feature < 0) continue;

      const auto mid_it = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                                rows_.begin() + static_cast<std::ptrdiff_t>(p.end),
                                                [&](std::uint32_t r) { return X_(r, best.feature) <= best.threshold; });
      const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
      const std::uint32_t depth = nodes_[static_cast<std::size_t>(p.id)].depth + 1;
      const int left = static_cast<int>(nodes_.size());
      nodes_.push_back(make_node(p.begin, mid, depth));
      const int right = static_cast<int>(nodes_.size());
      nodes_.push_back(make_node(mid, p.end, depth));
      auto& node = nodes_[static_cast<std::size_t>(p.id)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = right;
      stack.push_back({right, mid, p.end});
      stack.push_back({left, p.begin, mid});
    }
    return Tree(std::move(nodes_));
  }

 private:
  TreeNode make_node(std::size_t begin, std::size_t end, std::uint32_t depth) const {
    TreeNode n;
    for (std::size_t k = begin; k < end; ++k) {
      const auto r = rows_[k];
      (y_[r] ? n.weight1 : n.weight0) += w_[r];
    }
    n.depth = depth;
    n.samples = static_cast<std::uint32_t>(end - begin);
    return n;
  }

  Candidate find_split(const TreeNode& node, std::size_t begin, std::size_t end) {
    Candidate best;
    const std::size_t m = end - begin;
    if (node.weight0 == 0.0 || node.weight1 == 0.0) return best;
    if (m < params_.min_samples_split || m < 2 * params_.min_samples_leaf) return best;
    if (params_.max_depth != 0 && node.depth >= params_.max_depth) return best;

    const std::size_t d = order_.size();
    if (mtry_ < d) {
      // Fisher-Yates on the per-tree stream.
      for (std::size_t i = d - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(order_[i], order_[pick(rng_)]);
      }
    }

    const double total = node.weight0 + node.weight1;
    const double eps = 1e-12 * total;
    std::size_t informative = 0;
    for (std::size_t fi = 0; fi < d && informative < mtry_; ++fi) {
      const int f = static_cast<int>(order_[fi]);
      values_.clear();
      for (std::size_t k = begin; k < end; ++k) values_.emplace_back(X_(rows_[k], f), rows_[k]);
      std::sort(values_.begin(), values_.end());
      if (values_.front().first == values_.back().first) continue;
      ++informative;

      double l0 = 0.0;
      double l1 = 0.0;
      for (std::size_t k = 0; k + 1 < m; ++k) {
        const auto r = values_[k].second;
        (y_[r] ? l1 : l0) += w_[r];
        const double v = values_[k].first;
        const double next = values_[k + 1].first;
        if (v == next) continue;
        const std::size_t n_left = k + 1;
        if (n_left < params_.min_samples_leaf || m - n_left < params_.min_samples_leaf) continue;
        const double r0 = node.weight0 - l0;
        const double r1 = node.weight1 - l1;
        const double wl = l0 + l1;
        const double wr = r0 + r1;
        if (!(wr > 0.0)) continue;
        // Weighted child impurity times the node weight.
        const double imp = (wl - (l0 * l0 + l1 * l1) / wl) + (wr - (r0 * r0 + r1 * r1) / wr);
        double thr = 0.5 * v + 0.5 * next;
        if (thr >= next) thr = v;
        const bool better = best.feature < 0 || imp < best.impurity - eps ||
                            (imp <= best.impurity + eps &&
                             (f < best.feature || (f == best.feature && thr < best.threshold)));
        if (better) best = {imp, f, thr};
      }
    }
    return best;
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::span<const double> w_;
  TreeParams params_;
  Rng rng_;
  std::size_t mtry_ = 0;
  std::vector<std::size_t> order_;
  std::vector<std::uint32_t> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<double, std::uint32_t>> values_;
};

void validate(const TreeParams& p) {
  if (p.min_samples_split < 2) fail(ErrorCode::InvalidHyperParam, "min_samples_split must be >= 2");
  if (p.min_samples_leaf < 1) fail(ErrorCode::InvalidHyperParam, "min_samples_leaf must be >= 1");
}

std::vector<std::pair<std::string, std::string>> tree_hyperparams(const TreeParams& p) {
  return {{"criterion", "gini"},
          {"min_samples_split", std::to_string(p.min_samples_split)},
          {"min_samples_leaf", std::to_string(p.min_samples_leaf)},
          {"max_depth", std::to_string(p.max_depth)}};
}

void require_both_classes(std::span<const int> y, const char* what) {
  bool has0 = false;
  bool has1 = false;
  for (int v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1) fail(ErrorCode::SingleClass, fmt::format("{} needs both classes", what));
}

std::vector<Tree> load_trees(TextReader& in, std::size_t expected = 0) {
  const auto count = in.integer("trees");
  if (count < 0 || (expected != 0 && static_cast<std::size_t>(count) != expected)) in.malformed("bad tree count");
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(count));
  for (std::int64_t t = 0; t < count; ++t) trees.push_back(Tree::load(in));
  return trees;
}

}  // namespace

Tree grow_tree(const Matrix& X, std::span<const int> y, std::span<const double> w, const TreeParams& params,
               std::uint64_t rng_seed) {
  validate(params);
  if (y.size() != static_cast<std::size_t>(X.rows()) || w.size() != y.size()) {
    fail(ErrorCode::LengthMismatch, "tree inputs differ in length");
  }
  return TreeBuilder(X, y, w, params, rng_seed).build();
}

// ---------------------------------------------------------------------------

DecisionTreeModel::DecisionTreeModel(FitInfo info, std::size_t n_features, Tree tree)
    : Classifier(n_features, std::move(info)), tree_(std::move(tree)) {}

double DecisionTreeModel::score_row(const double* x) const { return tree_.leaf(x).proba(); }

void DecisionTreeModel::save_body(TextWriter& out) const { tree_.save(out); }

std::unique_ptr<DecisionTreeModel> DecisionTreeModel::load(TextReader& in, FitInfo info, std::size_t n_features) {
  return std::make_unique<DecisionTreeModel>(std::move(info), n_features, Tree::load(in));
}

DecisionTreeModel fit_decision_tree(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                                    const TreeParams& params) {
  const auto w = effective_weights(X, y, weighting);
  FitInfo info;
  info.train_rows = y.size();
  info.class_weights = weighting.classes;
  info.hyperparams = tree_hyperparams(params);
  return DecisionTreeModel(std::move(info), static_cast<std::size_t>(X.cols()), grow_tree(X, y, w, params));
}

// ---------------------------------------------------------------------------

RandomForestModel::RandomForestModel(FitInfo info, std::size_t n_features, std::vector<Tree> trees)
    : Classifier(n_features, std::move(info)), trees_(std::move(trees)) {}

double RandomForestModel::score_row(const double* x) const {
  std::size_t votes = 0;
  for (const auto& t : trees_) votes += t.leaf(x).proba() > 0.5;
  return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

void RandomForestModel::save_body(TextWriter& out) const {
  out.integer("trees", static_cast<std::int64_t>(trees_.size()));
  for (const auto& t : trees_) t.save(out);
}

std::unique_ptr<RandomForestModel> RandomForestModel::load(TextReader& in, FitInfo info, std::size_t n_features) {
  auto trees = load_trees(in);
  if (trees.empty()) in.malformed("forest without trees");
  return std::make_unique<RandomForestModel>(std::move(info), n_features, std::move(trees));
}

RandomForestModel fit_random_forest(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                                    const ForestParams& params, std::uint64_t seed) {
  if (params.n_estimators < 1) fail(ErrorCode::InvalidHyperParam, "n_estimators must be >= 1");
  validate(params.tree);
  const auto w = effective_weights(X, y, weighting);
  const auto n = static_cast<std::size_t>(X.rows());
  const auto d = static_cast<std::size_t>(X.cols());

  TreeParams tp = params.tree;
  tp.max_features = params.max_features == 0
                        ? std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))))
                        : std::min(params.max_features, d);

  std::vector<Tree> trees(params.n_estimators);
  auto grow = [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(seed, t);
    Rng rng(tree_seed);
    std::vector<double> wt = w;
    if (params.bootstrap) {
      std::vector<std::uint32_t> counts(n, 0);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t k = 0; k < n; ++k) ++counts[pick(rng)];
      for (std::size_t i = 0; i < n; ++i) wt[i] *= counts[i];
    }
    trees[t] = grow_tree(X, y, wt, tp, derive_seed(tree_seed, 1));
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(params.threads, static_cast<unsigned>(params.n_estimators)));
  if (threads == 1) {
    for (std::size_t t = 0; t < params.n_estimators; ++t) grow(t);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t t = k; t < params.n_estimators; t += threads) grow(t);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  FitInfo info;
  info.seed = seed;
  info.train_rows = n;
  info.class_weights = weighting.classes;
  info.hyperparams = tree_hyperparams(params.tree);
  info.hyperparams.emplace_back("n_estimators", std::to_string(params.n_estimators));
  info.hyperparams.emplace_back("max_features", std::to_string(tp.max_features));
  info.hyperparams.emplace_back("bootstrap", params.bootstrap ? "true" : "false");
  return RandomForestModel(std::move(info), d, std::move(trees));
}

// ---------------------------------------------------------------------------

void adaboost_reweight(std::span<double> weights, std::span<const bool> misclassified, double alpha) {
  if (weights.size() != misclassified.size()) fail(ErrorCode::LengthMismatch, "weights and mistakes differ in length");
  const double boost = std::exp(alpha);
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (misclassified[i]) weights[i] *= boost;
    total += weights[i];
  }
  for (double& w : weights) w /= total;
}

AdaBoostModel::AdaBoostModel(FitInfo info, std::size_t n_features, std::vector<Tree> stumps, std::vector<double> alphas)
    : Classifier(n_features, std::move(info)), stumps_(std::move(stumps)), alphas_(std::move(alphas)) {}

double AdaBoostModel::score_row(const double* x) const {
  double s = 0.0;
  for (std::size_t m = 0; m < stumps_.size(); ++m) s += stumps_[m].leaf(x).proba() > 0.5 ? alphas_[m] : -alphas_[m];
  return s;
}

void AdaBoostModel::save_body(TextWriter& out) const {
  out.values("alphas", alphas_);
  out.integer("trees", static_cast<std::int64_t>(stumps_.size()));
  for (const auto& t : stumps_) t.save(out);
}

std::unique_ptr<AdaBoostModel> AdaBoostModel::load(TextReader& in, FitInfo info, std::size_t n_features) {
  auto alphas = in.values("alphas");
  auto stumps = load_trees(in);
  if (stumps.size() != alphas.size()) in.malformed("stump and alpha counts differ");
  return std::make_unique<AdaBoostModel>(std::move(info), n_features, std::move(stumps), std::move(alphas));
}

AdaBoostModel fit_adaboost(const Matrix& X, std::span<const int> y, const SampleWeighting& weighting,
                           const AdaBoostParams& params, std::uint64_t seed) {
  if (!(params.learning_rate > 0.0)) fail(ErrorCode::InvalidHyperParam, "learning_rate must be > 0");
  if (params.n_estimators < 1) fail(ErrorCode::InvalidHyperParam, "n_estimators must be >= 1");
  if (params.base_depth < 1) fail(ErrorCode::InvalidHyperParam, "base_depth must be >= 1");
  auto w = effective_weights(X, y, weighting);
  require_both_classes(y, "AdaBoost");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;

  TreeParams tp;
  tp.max_depth = params.base_depth;
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<Tree> stumps;
  std::vector<double> alphas;
  std::unique_ptr<bool[]> miss(new bool[n]);
  bool converged = true;
  for (std::size_t m = 0; m < params.n_estimators; ++m) {
    Tree stump = grow_tree(X, y, w, tp);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int h = stump.leaf(X.row(static_cast<Eigen::Index>(i)).data()).proba() > 0.5 ? 1 : 0;
      miss[i] = h != y[i];
      if (miss[i]) err += w[i];
    }
    if (err >= 0.5) {
      converged = m > 0;
      break;
    }
    const bool perfect = err <= 0.0;
    if (perfect) err = 1e-10;
    const double alpha = params.learning_rate * std::log((1.0 - err) / err);
    stumps.push_back(std::move(stump));
    alphas.push_back(alpha);
    if (perfect) break;
    adaboost_reweight(w, std::span<const bool>(miss.get(), n), alpha);
  }

  FitInfo info;
  info.seed = seed;
  info.converged = converged;
  info.iterations = stumps.size();
  info.train_rows = n;
  info.class_weights = weighting.classes;
  info.hyperparams = {{"n_estimators", std::to_string(params.n_estimators)},
                      {"learning_rate", fmt::format("{}", params.learning_rate)},
                      {"base_depth", std::to_string(params.base_depth)}};
  return AdaBoostModel(std::move(info), static_cast<std::size_t>(X.cols()), std::move(stumps), std::move(alphas));
}

}  // namespace gazescreen
