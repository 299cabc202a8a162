#include "gazescreen/eval.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "gazescreen/classify.hpp"
#include "gazescreen/error.hpp"

namespace gazescreen {
namespace {

void check_labels(std::span<const int> labels, const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorCode::NonBinaryLabel, fmt::format("{} label {} at index {} is not 0 or 1", what, labels[i], i));
    }
  }
}

Metric ratio(std::int64_t num, std::int64_t den, const char* reason) {
  if (den == 0) return Metric::undefined(reason);
  return Metric::of(static_cast<double>(num) / static_cast<double>(den));
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    fail(ErrorCode::LengthMismatch, fmt::format("{} true labels but {} predictions", truth.size(), predicted.size()));
  }
  check_labels(truth, "true");
  check_labels(predicted, "predicted");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) (predicted[i] ? cm.tp : cm.fn)++;
    else (predicted[i] ? cm.fp : cm.tn)++;
  }
  return cm;
}

AucCount rank_auc(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) {
    fail(ErrorCode::LengthMismatch, fmt::format("{} scores but {} labels", scores.size(), truth.size()));
  }
  check_labels(truth, "true");
  for (double s : scores) {
    if (std::isnan(s)) fail(ErrorCode::NonFiniteValue, "AUC score is NaN");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum; a tie block at 1-based positions a..b has
  // doubled midrank a + b.
  std::int64_t twice_rank_sum = 0;
  std::int64_t pos = 0;
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b + 1 < order.size() && scores[order[b + 1]] == scores[order[a]]) ++b;
    const auto doubled = static_cast<std::int64_t>(a + 1 + b + 1);
    for (std::size_t k = a; k <= b; ++k) {
      if (truth[order[k]]) {
        twice_rank_sum += doubled;
        ++pos;
      }
    }
    a = b + 1;
  }
  const std::int64_t neg = static_cast<std::int64_t>(scores.size()) - pos;
  AucCount c;
  c.pairs = pos * neg;
  c.half_units = twice_rank_sum - pos * (pos + 1);
  return c;
}

MetricSet metrics(const ConfusionMatrix& cm, std::optional<std::span<const double>> scores,
                  std::span<const int> truth) {
  MetricSet m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total(), "no frames evaluated");
  m.sensitivity = ratio(cm.tp, cm.tp + cm.fn, "no positive (concussed) frames");
  m.specificity = ratio(cm.tn, cm.tn + cm.fp, "no negative (control) frames");
  m.precision = ratio(cm.tp, cm.tp + cm.fp, "no frames predicted positive");
  // 2PR / (P + R) written over counts; 0 when P + R = 0 with errors present.
  m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "no positive frames and none predicted");

  if (scores) {
    if (scores->size() != truth.size()) {
      fail(ErrorCode::LengthMismatch, fmt::format("{} scores but {} labels", scores->size(), truth.size()));
    }
    if (static_cast<std::int64_t>(truth.size()) != cm.total()) {
      fail(ErrorCode::LengthMismatch, fmt::format("{} labels but the confusion matrix counts {}", truth.size(), cm.total()));
    }
    const AucCount c = rank_auc(*scores, truth);
    m.auc = c.pairs == 0 ? Metric::undefined("AUC needs both classes") : Metric::of(c.value());
  } else {
    m.auc_from_labels = true;
    if (m.sensitivity.defined() && m.specificity.defined()) {
      m.auc = Metric::of(0.5 * (m.sensitivity.value + m.specificity.value));
    } else {
      m.auc = Metric::undefined("label-only AUC needs both classes");
    }
  }
  return m;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) {
    fail(ErrorCode::LengthMismatch, fmt::format("{} scores but {} labels", scores.size(), truth.size()));
  }
  check_labels(truth, "true");
  const auto P = static_cast<std::int64_t>(std::count(truth.begin(), truth.end(), 1));
  const auto N = static_cast<std::int64_t>(truth.size()) - P;
  if (P == 0 || N == 0) fail(ErrorCode::SingleClass, "ROC curve needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity(), 0, 0}};
  std::int64_t tp = 0, fp = 0;
  for (std::size_t a = 0; a < order.size();) {
    const double thr = scores[order[a]];
    std::size_t b = a;
    while (b < order.size() && scores[order[b]] == thr) {
      (truth[order[b]] ? tp : fp)++;
      ++b;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P),
                     thr, fp, tp});
    a = b;
  }
  return curve;
}

double roc_area(const std::vector<RocPoint>& curve) {
  if (curve.size() < 2) fail(ErrorCode::EmptyDataset, "ROC curve needs at least two points");
  std::int64_t twice_area = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    twice_area += (curve[k].fp - curve[k - 1].fp) * (curve[k].tp + curve[k - 1].tp);
  }
  const RocPoint& end = curve.back();
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(end.fp * end.tp));
}

// ---------------------------------------------------------------------------

std::string format_percent(const Metric& m) {
  if (!m.defined()) return "n/a";
  return fmt::format("{:.1f}", 100.0 * m.value);
}

namespace {

const Metric& metric_by_index(const MetricSet& m, std::size_t k) {
  const Metric* all[] = {&m.accuracy, &m.sensitivity, &m.specificity, &m.precision, &m.f1, &m.auc};
  return *all[k];
}

std::size_t order_rank(const std::string& name) {
  for (std::size_t k = 0; k < kReportOrder.size(); ++k) {
    if (display_name(kReportOrder[k]) == name) return k;
  }
  return kReportOrder.size();
}

}  // namespace

Report render_report(std::vector<ModelMetrics> models, TestKind kind) {
  const std::string title = kind == TestKind::SP ? "Smooth Pursuit" : "Visual Motion Sensitivity";
  return render_report(std::move(models), title + " test set, metrics in percent");
}

Report render_report(std::vector<ModelMetrics> models, std::string_view title) {
  std::stable_sort(models.begin(), models.end(),
                   [](const ModelMetrics& a, const ModelMetrics& b) { return order_rank(a.model) < order_rank(b.model); });

  Report r;
  r.csv = "metric,model,value_percent\n";
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    for (const auto& mm : models) {
      r.csv += fmt::format("{},{},{}\n", kMetricNames[k], mm.model, format_percent(metric_by_index(mm.metrics, k)));
    }
  }

  r.text = fmt::format("{}\n\n", title);
  std::size_t label_width = 12;
  std::vector<std::size_t> widths;
  for (const auto& mm : models) widths.push_back(std::max<std::size_t>(mm.model.size(), 6) + 2);
  r.text += fmt::format("{:<{}}", "Metric", label_width);
  for (std::size_t c = 0; c < models.size(); ++c) r.text += fmt::format("{:>{}}", models[c].model, widths[c]);
  r.text += '\n';
  bool fallback = false;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    r.text += fmt::format("{:<{}}", kMetricNames[k], label_width);
    for (std::size_t c = 0; c < models.size(); ++c) {
      std::string cell = format_percent(metric_by_index(models[c].metrics, k));
      if (k == 5 && models[c].metrics.auc_from_labels) {
        cell += '*';
        fallback = true;
      }
      r.text += fmt::format("{:>{}}", cell, widths[c]);
    }
    r.text += '\n';
  }
  if (fallback) r.text += "\n* AUC from hard labels: (sensitivity + specificity) / 2\n";
  std::vector<std::string> undefined;
  for (const auto& mm : models) {
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      const Metric& m = metric_by_index(mm.metrics, k);
      if (!m.defined()) undefined.push_back(fmt::format("{} {}: {}", mm.model, kMetricNames[k], m.undefined_reason));
    }
  }
  if (!undefined.empty()) {
    r.text += "\nn/a:\n";
    for (const auto& u : undefined) r.text += "  " + u + "\n";
  }
  return r;
}

std::vector<ReportCell> parse_report_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != "metric,model,value_percent") {
    fail(ErrorCode::MissingColumn, fmt::format("{}: expected header metric,model,value_percent", source));
  }
  std::vector<ReportCell> cells;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) fail(ErrorCode::MalformedRow, fmt::format("{}:{}: expected 3 fields", source, row));
    ReportCell cell{line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), std::nan("")};
    const std::string value = line.substr(c2 + 1);
    if (value != "n/a") {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), cell.value_percent);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        fail(ErrorCode::MalformedRow, fmt::format("{}:{}: bad percentage '{}'", source, row, value));
      }
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace gazescreen
