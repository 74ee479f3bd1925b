#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "common/error.hpp"
#include "common/log.hpp"
#include "common/text.hpp"

namespace nodulekit::metrics {

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_binary(int v, const char* what) {
  if (v != 0 && v != 1) fail(ErrorCode::kInvalidArgument, std::string(what) + " must be 0 or 1");
}

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    fail(ErrorCode::kLengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                         std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_binary(predictions[i], "prediction");
    check_binary(labels[i], "label");
    if (labels[i] == 1) {
      (predictions[i] == 1 ? c.tp : c.fn) += 1;
    } else {
      (predictions[i] == 1 ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

double f1_from(double precision, double recall) noexcept {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

ClassMetrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) fail(ErrorCode::kEmptyEvaluation, "no samples to evaluate");
  ClassMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = f1_from(m.precision, m.recall);
  return m;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    check_binary(l, "label");
    pos += l == 1 ? 1 : 0;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorCode::kSingleClassInput, "ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  constexpr double kInf = std::numeric_limits<double>::infinity();
  RocResult r;
  r.points.push_back({0.0, 0.0, kInf});
  // Integer counts keep the area exact up to the final division.
  std::size_t tp = 0;
  std::size_t fp = 0;
  double twice_area = 0.0;  // in units of (1/neg) x (1/pos)
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    const std::size_t tp0 = tp;
    const std::size_t fp0 = fp;
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    twice_area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    r.points.push_back({ratio(fp, neg), ratio(tp, pos), s});
  }
  r.points.push_back({1.0, 1.0, -kInf});
  r.auc = twice_area / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return r;
}

double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) concordant += 1.0;
      else if (scores[i] == scores[j]) concordant += 0.5;
    }
  }
  if (pairs == 0) fail(ErrorCode::kSingleClassInput, "pairwise AUC needs both classes");
  return concordant / static_cast<double>(pairs);
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kLengthMismatch, "scores and labels differ in length");
  std::vector<int> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] >= 0.5 ? 1 : 0;
  MetricsReport rep;
  rep.counts = confusion_counts(predicted, labels);
  rep.metrics = metrics_from_counts(rep.counts);
  rep.positives = rep.counts.tp + rep.counts.fn;
  rep.negatives = rep.counts.tn + rep.counts.fp;
  if (rep.positives > 0 && rep.negatives > 0) {
    auto roc = roc_auc(scores, labels);
    rep.auc = roc.auc;
    rep.roc = std::move(roc.points);
  } else {
    logger()->warn("SingleClassInput: evaluation set has one class; AUC not reported");
  }
  return rep;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
  j["n"] = r.counts.total();
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  j["accuracy"] = r.metrics.accuracy;
  j["precision"] = r.metrics.precision;
  j["recall"] = r.metrics.recall;
  j["f1"] = r.metrics.f1;
  j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  j["percent"] = {{"accuracy", percent(r.metrics.accuracy)},
                  {"precision", percent(r.metrics.precision)},
                  {"recall", percent(r.metrics.recall)},
                  {"f1", percent(r.metrics.f1)},
                  {"auc", r.auc ? nlohmann::json(percent(*r.auc)) : nlohmann::json(nullptr)}};
  j["roc_points"] = r.roc.size();
  return j;
}

namespace {

std::string threshold_text(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return format_number(t);
}

}  // namespace

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : points) {
    out += threshold_text(p.threshold) + "," + format_number(p.fpr) + "," + format_number(p.tpr) + "\n";
  }
  return out;
}

std::string roc_svg(const std::vector<RocPoint>& points, const std::string& title) {
  constexpr int kSize = 400;
  constexpr int kMargin = 40;
  constexpr int kPlot = kSize - 2 * kMargin;
  auto px = [](double v) { return kMargin + v * kPlot; };
  auto py = [](double v) { return kMargin + (1.0 - v) * kPlot; };
  char buf[128];
  std::string path;
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.fpr), py(p.tpr));
    path += buf;
  }
  if (!path.empty()) path.pop_back();

  std::string escaped;
  for (char c : title) {
    switch (c) {
      case '<': escaped += "&lt;"; break;
      case '>': escaped += "&gt;"; break;
      case '&': escaped += "&amp;"; break;
      default: escaped += c;
    }
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n";
  svg += "<rect width=\"400\" height=\"400\" fill=\"white\"/>\n";
  svg += "<rect x=\"40\" y=\"40\" width=\"320\" height=\"320\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<line x1=\"40\" y1=\"360\" x2=\"360\" y2=\"40\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  svg += "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"" + path + "\"/>\n";
  svg += "<text x=\"200\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + escaped + "</text>\n";
  svg += "<text x=\"200\" y=\"390\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">false positive rate</text>\n";
  svg += "<text x=\"15\" y=\"200\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 200)\">true positive rate</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace nodulekit::metrics
