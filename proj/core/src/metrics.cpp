#include "deconvparse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "deconvparse/errors.hpp"

namespace deconvparse {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t v : counts) n += v;
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t gt) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < classes; ++p) n += at(gt, p);
  return n;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (other.classes != classes) {
    throw DimensionError("confusion add: class count mismatch");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt,
                                 std::size_t classes) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw DimensionError("confusion_matrix: prediction/gt shape mismatch");
  }
  ConfusionMatrix m(classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.v[i], p = pred.v[i];
    if (g < 0 || p < 0 || static_cast<std::size_t>(g) >= classes ||
        static_cast<std::size_t>(p) >= classes) {
      throw LabelError("confusion_matrix: label out of range (gt=" +
                       std::to_string(g) + ", pred=" + std::to_string(p) +
                       ")");
    }
    m.at(static_cast<std::size_t>(g), static_cast<std::size_t>(p))++;
  }
  return m;
}

AccuracyMetrics accuracy_metrics(const ConfusionMatrix& m) {
  const std::size_t total = m.total();
  if (total == 0) {
    throw EvalError("accuracy_metrics: empty evaluation");
  }
  AccuracyMetrics out;
  std::size_t trace = 0;
  double class_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < m.classes; ++c) {
    trace += m.at(c, c);
    const std::size_t row = m.row_sum(c);
    if (row > 0) {
      class_sum += static_cast<double>(m.at(c, c)) / static_cast<double>(row);
      ++present;
    }
  }
  out.pixel_acc = static_cast<double>(trace) / static_cast<double>(total);
  out.class_acc = present ? class_sum / static_cast<double>(present) : 0.0;
  return out;
}

BinaryCurveMetrics binary_curve_metrics(std::span<const double> scores,
                                        std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError("binary_curve_metrics: score/label size mismatch");
  }
  std::size_t total_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw LabelError("binary_curve_metrics: labels must be 0/1");
    }
    if (!std::isfinite(scores[i])) {
      throw NumericalError("binary_curve_metrics: non-finite score");
    }
    total_pos += static_cast<std::size_t>(labels[i]);
  }
  if (total_pos == 0 || total_pos == labels.size()) {
    throw EvalError("binary_curve_metrics: ground truth has a single class");
  }
  const std::size_t total_neg = labels.size() - total_pos;

  // Sort by score descending; sweep thresholds at each distinct value.
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  BinaryCurveMetrics out;
  // +inf sentinel: no positives predicted.
  out.threshold = std::numeric_limits<double>::infinity();
  out.max_f1 = 0.0;
  out.precision = 1.0;
  out.recall = 0.0;
  out.fpr = 0.0;
  out.fnr = 1.0;

  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double t = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == t) {
      if (labels[idx[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall =
        static_cast<double>(tp) / static_cast<double>(total_pos);
    const double f1 =
        tp == 0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    out.ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    if (f1 > out.max_f1 || (f1 == out.max_f1 && t < out.threshold)) {
      out.max_f1 = f1;
      out.threshold = t;
      out.precision = precision;
      out.recall = recall;
      out.fpr = static_cast<double>(fp) / static_cast<double>(total_neg);
      out.fnr = 1.0 - recall;
    }
  }
  return out;
}

std::string metrics_csv_header() {
  return "pixels,pixel_acc,class_acc,maxf,ap,pre,rec,fpr,fnr";
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_row(const MetricsReport& report) {
  std::string row = std::to_string(report.confusion.total());
  row += "," + fmt(report.accuracy.pixel_acc);
  row += "," + fmt(report.accuracy.class_acc);
  if (report.binary) {
    row += "," + fmt(report.binary->max_f1);
    row += "," + fmt(report.binary->ap);
    row += "," + fmt(report.binary->precision);
    row += "," + fmt(report.binary->recall);
    row += "," + fmt(report.binary->fpr);
    row += "," + fmt(report.binary->fnr);
  } else {
    row += ",,,,,,";
  }
  return row;
}

}  // namespace deconvparse
