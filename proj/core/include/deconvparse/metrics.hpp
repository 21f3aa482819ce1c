#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deconvparse/label_map.hpp"

namespace deconvparse {

struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // [gt * classes + pred]

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t c) : classes(c), counts(c * c, 0) {}

  std::size_t& at(std::size_t gt, std::size_t pred) {
    return counts[gt * classes + pred];
  }
  std::size_t at(std::size_t gt, std::size_t pred) const {
    return counts[gt * classes + pred];
  }
  std::size_t total() const;
  std::size_t row_sum(std::size_t gt) const;
  void add(const ConfusionMatrix& other);
};

// M[g][p] = pixels with ground truth g predicted p. Shapes must match and
// every value must be < classes.
ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt,
                                 std::size_t classes);

struct AccuracyMetrics {
  double pixel_acc = 0.0;
  double class_acc = 0.0;
};

// pixel_acc = trace/total; class_acc = mean of per-class recall over the
// classes present in the ground truth. All-zero matrix -> EvalError.
AccuracyMetrics accuracy_metrics(const ConfusionMatrix& m);

struct BinaryCurveMetrics {
  double max_f1 = 0.0;
  double ap = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double threshold = 0.0;  // the MaxF operating point (lowest on ties)
};

// Threshold sweep over the distinct score values (plus a +inf sentinel):
// prediction is positive when score >= threshold. MaxF is the maximum F1;
// AP is the step-interpolated area under the precision-recall curve;
// PRE/REC/FPR/FNR are reported at the MaxF threshold. Both classes must be
// present in the ground truth.
BinaryCurveMetrics binary_curve_metrics(std::span<const double> scores,
                                        std::span<const int> labels);

struct MetricsReport {
  ConfusionMatrix confusion;
  AccuracyMetrics accuracy;
  std::optional<BinaryCurveMetrics> binary;
};

// One CSV row per evaluation, fixed column order.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);

}  // namespace deconvparse
