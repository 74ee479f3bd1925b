#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace nodulekit::metrics {

/// Positive class = nodule (1).
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the first point, -inf for the last
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;
};

struct MetricsReport {
  ConfusionCounts counts;
  ClassMetrics metrics;
  std::optional<double> auc;  // empty when the set holds a single class
  std::vector<RocPoint> roc;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Throws LengthMismatch on unequal lengths, InvalidArgument on non-binary values.
ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> labels);

/// Precision, recall and F1 define 0/0 as 0. Throws EmptyEvaluation when total = 0.
ClassMetrics metrics_from_counts(const ConfusionCounts& counts);

/// 2PR/(P+R), 0 when P+R = 0.
double f1_from(double precision, double recall) noexcept;

/// Sweeps thresholds over the unique scores in descending order; a sample is
/// called positive when score >= threshold. The curve runs from (0,0) at +inf
/// to (1,1) at -inf and AUC is its trapezoidal area. Throws SingleClassInput.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of (positive, negative) pairs ranked correctly, ties counted 0.5.
/// Quadratic; used as the reference for roc_auc.
double pairwise_auc(std::span<const double> scores, std::span<const int> labels);

/// Labels are score >= 0.5. AUC is left empty (with a warning) for single-class input.
MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels);

/// "98.37" style, two decimals.
std::string percent(double fraction);

nlohmann::json to_json(const MetricsReport& report);
std::string roc_csv(const std::vector<RocPoint>& points);
/// Self-contained SVG line plot of the ROC curve.
std::string roc_svg(const std::vector<RocPoint>& points, const std::string& title);

}  // namespace nodulekit::metrics
