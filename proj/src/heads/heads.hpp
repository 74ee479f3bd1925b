#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heads/losses.hpp"
#include "json.hpp"
#include "vit/tensor_archive.hpp"

namespace nodulekit::heads {

using Box = std::array<double, 4>;  // cx, cy, bw, bh (normalized)

/// Linear map to `Outputs` values; weight is Outputs x dim, row-major.
template <std::size_t Outputs>
struct LinearHead {
  std::size_t dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  LinearHead() = default;
  explicit LinearHead(std::size_t d) : dim(d), weight(Outputs * d, 0.0), bias(Outputs, 0.0) {}

  std::array<double, Outputs> apply(std::span<const float> feature) const;
};

using ClassifierHead = LinearHead<2>;
using DetectionHead = LinearHead<4>;

struct Classification {
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
};

Classification head_forward_classify(std::span<const float> feature, const ClassifierHead& head);

/// logistic(W f + b), each component in (0, 1).
Box head_forward_detect(std::span<const float> feature, const DetectionHead& head);

/// Feature matrix with labels and (for positives) box targets.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<int> labels;
  std::vector<std::optional<Box>> boxes;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> feature(std::size_t i) const {
    return std::span(features).subspan(i * dim, dim);
  }
  void add(std::span<const float> f, int label, std::optional<Box> box = std::nullopt);
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  double weight_decay = 0.01;
  std::size_t epochs = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  double bbox_lambda = 1.0;
  /// Train on z-scored features (train-set statistics). The normalization is
  /// folded into the returned heads, which therefore still take raw features.
  bool standardize = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SceConfig& c);

/// Per-feature affine map z = (x - mean) * scale.
struct FeatureNorm {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / std, or 1 for constant features
};

FeatureNorm fit_feature_norm(const FeatureSet& data);
FeatureSet apply_feature_norm(const FeatureSet& data, const FeatureNorm& norm);
/// Rewrites a head trained on normalized inputs to act on raw inputs.
template <std::size_t Outputs>
void fold_feature_norm(LinearHead<Outputs>& head, const FeatureNorm& norm);

struct HeadGradients {
  std::vector<double> cls_weight;
  std::vector<double> cls_bias;
  std::vector<double> det_weight;
  std::vector<double> det_bias;
};

/// Objective minimized per batch:
///   mean_i SCE(t_i, softmax(Wc f_i + bc))
///   + lambda * mean_{i positive} bbox_loss(logistic(Wd f_i + bd), box_i)
///   + 0.5 * wd * (|Wc|^2 + |Wd|^2)
/// The detection term is zero for batches without positives or when
/// `train_detection` is false.
double batch_objective(const FeatureSet& data, std::span<const std::size_t> batch,
                       const ClassifierHead& cls, const DetectionHead& det, const SceConfig& sce,
                       double bbox_lambda, double weight_decay, bool train_detection = true);

/// Analytic gradient of batch_objective. Weight decay contributes wd * W to
/// weight gradients only.
HeadGradients head_gradients(const FeatureSet& data, std::span<const std::size_t> batch,
                             const ClassifierHead& cls, const DetectionHead& det,
                             const SceConfig& sce, double bbox_lambda, double weight_decay,
                             bool train_detection = true);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg, std::size_t step);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainedHeads {
  ClassifierHead cls;
  DetectionHead det;
  bool detection_trained = false;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

/// Joint training with per-epoch seeded shuffling. Returns the parameters of
/// the epoch with the best validation accuracy (earliest on ties). An empty
/// validation set falls back to the training set.
TrainedHeads train_heads(const FeatureSet& train, const FeatureSet& val, const TrainConfig& cfg,
                         const SceConfig& sce);

/// Mean objective (without weight decay) and accuracy over a whole set.
std::pair<double, double> evaluate_loss_accuracy(const FeatureSet& data, const ClassifierHead& cls,
                                                 const DetectionHead& det, const SceConfig& sce,
                                                 double bbox_lambda, bool with_detection);

std::string history_csv(const std::vector<EpochRecord>& history);

/// cls_head.{weight,bias} and det_head.{weight,bias} as float32.
vit::TensorArchive heads_to_archive(const ClassifierHead& cls, const DetectionHead& det,
                                    const nlohmann::json& metadata);
std::pair<ClassifierHead, DetectionHead> heads_from_archive(const vit::TensorArchive& archive);

}  // namespace nodulekit::heads
