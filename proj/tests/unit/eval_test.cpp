#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"
#include "gazescreen/eval.hpp"
#include "support/oracles.hpp"

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

// Random scores on a coarse lattice so ties are common.
std::pair<std::vector<double>, std::vector<int>> random_scores(std::mt19937_64& gen, bool ties) {
  const std::size_t n = 2 + gen() % 199;
  std::vector<double> s(n);
  std::vector<int> y(n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = ties ? static_cast<double>(gen() % 7) : u(gen);
    y[i] = static_cast<int>(gen() % 2);
  }
  y[0] = 0;
  y[1] = 1;
  return {s, y};
}

}  // namespace

TEST_CASE("confusion counts") {
  CHECK(confusion(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 0, 1}) == ConfusionMatrix{1, 1, 1, 1});
  const std::vector<int> y{1, 0, 1, 1, 0};
  const auto same = confusion(y, y);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);
  const auto flipped = confusion(std::vector<int>(6, 0), std::vector<int>(6, 1));
  CHECK(flipped.tn == 0);
  CHECK(flipped.fp == 6);
  CHECK(code_of([] { confusion(std::vector<int>{0}, std::vector<int>{0, 1}); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { confusion(std::vector<int>{2}, std::vector<int>{0}); }) == ErrorCode::NonBinaryLabel);
}

TEST_CASE("metrics on hand-worked confusion matrices") {
  const auto m = metrics({90, 20, 80, 10});
  CHECK(m.sensitivity.value == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(m.specificity.value == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(m.precision.value == doctest::Approx(90.0 / 110.0).epsilon(1e-12));
  CHECK(m.accuracy.value == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(m.f1.value == doctest::Approx(2.0 * (90.0 / 110.0) * 0.9 / (90.0 / 110.0 + 0.9)).epsilon(1e-12));
  CHECK(m.auc_from_labels);
  CHECK(m.auc.value == doctest::Approx(0.85).epsilon(1e-12));

  const auto perfect = metrics({5, 0, 7, 0});
  for (const Metric* v : {&perfect.accuracy, &perfect.sensitivity, &perfect.specificity, &perfect.precision, &perfect.f1, &perfect.auc}) {
    CHECK(v->value == 1.0);
  }
}

TEST_CASE("undefined metrics carry a reason") {
  const auto none_positive = metrics({0, 0, 10, 0});
  CHECK_FALSE(none_positive.sensitivity.defined());
  CHECK_FALSE(none_positive.precision.undefined_reason.empty());
  CHECK_FALSE(none_positive.f1.defined());
  CHECK(none_positive.specificity.value == 1.0);

  const auto all_missed = metrics({0, 0, 5, 5});
  CHECK(all_missed.sensitivity.value == 0.0);
  CHECK_FALSE(all_missed.precision.defined());
  CHECK(all_missed.f1.value == 0.0);
  CHECK(format_percent(all_missed.precision) == "n/a");
}

TEST_CASE("AUC from scores") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  const auto cm = confusion(y, std::vector<int>{0, 0, 0, 1});
  const auto m = metrics(cm, std::span<const double>(s), y);
  CHECK_FALSE(m.auc_from_labels);
  CHECK(m.auc.value == 0.75);

  const std::vector<double> flat(4, 0.3);
  CHECK(metrics(cm, std::span<const double>(flat), y).auc.value == 0.5);
  const std::vector<int> one_class(4, 1);
  CHECK_FALSE(metrics(confusion(one_class, one_class), std::span<const double>(s), one_class).auc.defined());
}

TEST_CASE("rank AUC equals the pair-counting oracle") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 300; ++trial) {
    const auto [s, y] = random_scores(gen, trial % 2 == 0);
    const auto oracle_count = oracle::auc_pairs(s, y);
    const auto c = rank_auc(s, y);
    CHECK(c.half_units == oracle_count.half_units);
    CHECK(c.pairs == oracle_count.pairs);
    CHECK(c.value() == oracle_count.auc());
    CHECK(roc_area(roc_curve(s, y)) == oracle_count.auc());
  }
}

TEST_CASE("AUC invariances") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto [s, y] = random_scores(gen, false);
    const double base = rank_auc(s, y).value();
    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
    CHECK(rank_auc(t, y).value() == base);

    // Swapping the positive class maps auc to 1 - auc with no ties.
    std::vector<int> swapped(y.size());
    std::transform(y.begin(), y.end(), swapped.begin(), [](int v) { return 1 - v; });
    CHECK(rank_auc(s, swapped).value() == doctest::Approx(1.0 - base).epsilon(1e-12));
  }
}

TEST_CASE("accuracy is the class-weighted mean of sensitivity and specificity") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 500; ++trial) {
    const ConfusionMatrix cm{static_cast<std::int64_t>(gen() % 50), static_cast<std::int64_t>(gen() % 50),
                             static_cast<std::int64_t>(gen() % 50) + 1, static_cast<std::int64_t>(gen() % 50) + 1};
    const auto m = metrics(cm);
    const double P = static_cast<double>(cm.positives());
    const double N = static_cast<double>(cm.negatives());
    CHECK(m.accuracy.value == doctest::Approx((m.sensitivity.value * P + m.specificity.value * N) / (P + N)).epsilon(1e-14));

    // Swapping classes swaps sensitivity and specificity.
    const auto swapped = metrics({cm.tn, cm.fn, cm.tp, cm.fp});
    CHECK(swapped.sensitivity.value == m.specificity.value);
    CHECK(swapped.specificity.value == m.sensitivity.value);
  }
}

TEST_CASE("ROC curve shape") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  const auto curve = roc_curve(sep, y);
  CHECK(curve.front().fpr == 0.0);
  CHECK(curve.front().tpr == 0.0);
  CHECK(curve.back().fpr == 1.0);
  CHECK(curve.back().tpr == 1.0);
  CHECK(std::any_of(curve.begin(), curve.end(), [](const RocPoint& p) { return p.fpr == 0.0 && p.tpr == 1.0; }));
  CHECK(roc_area(curve) == 1.0);

  const std::vector<double> flat(4, 2.0);
  const auto two = roc_curve(flat, y);
  CHECK(two.size() == 2);
  CHECK(roc_area(two) == 0.5);

  std::mt19937_64 gen(2);
  const auto [s, yy] = random_scores(gen, true);
  const auto c = roc_curve(s, yy);
  for (std::size_t k = 1; k < c.size(); ++k) {
    CHECK(c[k].fpr >= c[k - 1].fpr);
    CHECK(c[k].tpr >= c[k - 1].tpr);
    CHECK(c[k].threshold < c[k - 1].threshold);
  }
  CHECK(code_of([] { roc_curve(std::vector<double>{1, 2}, std::vector<int>{1, 1}); }) == ErrorCode::SingleClass);
}

TEST_CASE("report rendering") {
  MetricSet ones;
  for (Metric* m : {&ones.accuracy, &ones.sensitivity, &ones.specificity, &ones.precision, &ones.f1, &ones.auc}) *m = Metric::of(1.0);

  SUBCASE("single perfect model") {
    const auto r = render_report({{"Random Forest", ones}}, TestKind::SP);
    const std::string expected_csv =
        "metric,model,value_percent\nAccuracy,Random Forest,100.0\nSensitivity,Random Forest,100.0\n"
        "Specificity,Random Forest,100.0\nPrecision,Random Forest,100.0\nF1-score,Random Forest,100.0\n"
        "AUC,Random Forest,100.0\n";
    CHECK(r.csv == expected_csv);
    CHECK(r.text.find("100.0") != std::string::npos);
  }
  SUBCASE("column order and cell rounding") {
    MetricSet nb = ones;
    nb.sensitivity = Metric::of(0.935);
    nb.accuracy = Metric::of(0.97349);
    const auto r = render_report({{"Perceptron", ones}, {"Naive Bayes", nb}, {"Random Forest", ones}}, TestKind::VMS);
    CHECK(r.csv.find("Sensitivity,Naive Bayes,93.5\n") != std::string::npos);
    CHECK(r.csv.find("Accuracy,Naive Bayes,97.3\n") != std::string::npos);
    CHECK(r.text.find("Random Forest") < r.text.find("Naive Bayes"));
    CHECK(r.text.find("Naive Bayes") < r.text.find("Perceptron"));

    std::istringstream in(r.csv);
    const auto cells = parse_report_csv(in);
    CHECK(cells.size() == 18);
    for (const auto& c : cells) {
      if (c.model == "Naive Bayes" && c.metric == "Accuracy") CHECK(std::abs(c.value_percent - 97.349) <= 0.05);
      if (c.model == "Naive Bayes" && c.metric == "Sensitivity") CHECK(std::abs(c.value_percent - 93.5) <= 0.05);
    }
  }
  SUBCASE("every model in the fixed order") {
    std::vector<ModelMetrics> all;
    for (auto it = kReportOrder.rbegin(); it != kReportOrder.rend(); ++it) all.push_back({std::string(display_name(*it)), ones});
    const auto r = render_report(all, TestKind::SP);
    std::size_t last = 0;
    const std::string header = r.text.substr(r.text.find("Metric"));
    for (ModelKind k : kReportOrder) {
      const auto at = header.find(display_name(k));
      CHECK(at != std::string::npos);
      CHECK(at >= last);
      last = at;
    }
  }
  SUBCASE("fallback AUC and undefined cells are flagged") {
    MetricSet m = metrics({0, 0, 5, 5});
    const auto r = render_report({{"SVM", m}}, TestKind::SP);
    CHECK(r.text.find('*') != std::string::npos);
    CHECK(r.text.find("n/a") != std::string::npos);
    CHECK(r.csv.find("Precision,SVM,n/a") != std::string::npos);
    std::istringstream in(r.csv);
    const auto cells = parse_report_csv(in);
    CHECK(std::isnan(cells[3].value_percent));
  }
  std::istringstream bad("metric,model\n");
  CHECK(code_of([&] { parse_report_csv(bad); }) == ErrorCode::MissingColumn);
}
