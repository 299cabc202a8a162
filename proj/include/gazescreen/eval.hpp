#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gazescreen/gaze_data.hpp"

namespace gazescreen {

/// Concussed (label 1) is the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return tn + fp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted);

/// A metric value, or NaN with the reason it is undefined.
struct Metric {
  double value = std::nan("");
  std::string undefined_reason;

  bool defined() const { return !std::isnan(value); }
  static Metric of(double v) { return {v, {}}; }
  static Metric undefined(std::string reason) { return {std::nan(""), std::move(reason)}; }
};

struct MetricSet {
  Metric accuracy;
  Metric sensitivity;
  Metric specificity;
  Metric precision;
  Metric f1;
  Metric auc;
  bool auc_from_labels = false;  // (sensitivity + specificity) / 2 fallback
};

/// With `scores` the AUC is the rank statistic over them; without, the
/// label-only fallback is used and flagged.
MetricSet metrics(const ConfusionMatrix& cm, std::optional<std::span<const double>> scores = std::nullopt,
                  std::span<const int> truth = {});

/// Exact AUC as (numerator in half pairs, pair count): correctly ordered
/// positive/negative pairs count 2, ties 1.
struct AucCount {
  std::int64_t half_units = 0;
  std::int64_t pairs = 0;
  double value() const { return static_cast<double>(half_units) / (2.0 * static_cast<double>(pairs)); }
};

/// Mann-Whitney rank statistic with midranks for ties, O(n log n).
AucCount rank_auc(std::span<const double> scores, std::span<const int> truth);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // scores >= threshold are called positive; +inf at the origin
  std::int64_t fp;
  std::int64_t tp;
};

/// One point per distinct score, from (0, 0) to (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> truth);
/// Trapezoidal area under a curve from roc_curve, in exact integer arithmetic.
double roc_area(const std::vector<RocPoint>& curve);

// ------------------------------------------------------------------ reports

inline constexpr std::array<std::string_view, 6> kMetricNames{"Accuracy", "Sensitivity", "Specificity",
                                                              "Precision", "F1-score", "AUC"};

struct ModelMetrics {
  std::string model;  // display name, e.g. "Random Forest"
  MetricSet metrics;
};

struct Report {
  std::string text;
  std::string csv;
};

/// Columns follow the fixed model order (unknown names last, as given);
/// values are percentages with one decimal.
Report render_report(std::vector<ModelMetrics> models, TestKind kind);
Report render_report(std::vector<ModelMetrics> models, std::string_view title);

/// Percentage text for one cell: "97.3", or "n/a" when undefined.
std::string format_percent(const Metric& m);

struct ReportCell {
  std::string metric;
  std::string model;
  double value_percent;  // NaN for "n/a"
};

std::vector<ReportCell> parse_report_csv(std::istream& in, const std::string& source = "<report>");

}  // namespace gazescreen
