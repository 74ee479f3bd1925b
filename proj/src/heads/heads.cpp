#include "heads/heads.hpp"

#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/log.hpp"
#include "common/random.hpp"
#include "common/text.hpp"

namespace nodulekit::heads {

namespace {

double logistic(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::array<double, 2> one_hot(int label) {
  return label == 1 ? std::array<double, 2>{0.0, 1.0} : std::array<double, 2>{1.0, 0.0};
}

double squared_norm(const std::vector<double>& v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

}  // namespace

template <std::size_t Outputs>
std::array<double, Outputs> LinearHead<Outputs>::apply(std::span<const float> feature) const {
  if (feature.size() != dim) {
    fail(ErrorCode::kShapeMismatch, "head expects feature length " + std::to_string(dim) +
                                        ", got " + std::to_string(feature.size()));
  }
  std::array<double, Outputs> out{};
  for (std::size_t o = 0; o < Outputs; ++o) {
    double acc = bias[o];
    const double* w = weight.data() + o * dim;
    for (std::size_t k = 0; k < dim; ++k) acc += w[k] * feature[k];
    out[o] = acc;
  }
  return out;
}

template struct LinearHead<2>;
template struct LinearHead<4>;

Classification head_forward_classify(std::span<const float> feature, const ClassifierHead& head) {
  Classification c;
  c.logits = head.apply(feature);
  const auto p = softmax(c.logits);
  c.probs = {p[0], p[1]};
  return c;
}

Box head_forward_detect(std::span<const float> feature, const DetectionHead& head) {
  Box out = head.apply(feature);
  for (auto& v : out) v = logistic(v);
  return out;
}

void FeatureSet::add(std::span<const float> f, int label, std::optional<Box> box) {
  if (dim == 0 && features.empty()) dim = f.size();
  if (f.size() != dim) fail(ErrorCode::kShapeMismatch, "feature length differs within a set");
  features.insert(features.end(), f.begin(), f.end());
  labels.push_back(label);
  boxes.push_back(box);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || batch_size == 0 || !(weight_decay >= 0.0) || epochs < 1 ||
      !(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0) || !(bbox_lambda >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "invalid training configuration");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"bbox_lambda", c.bbox_lambda},
          {"standardize", c.standardize}};
}

nlohmann::json to_json(const SceConfig& c) {
  return {{"alpha", c.alpha}, {"beta", c.beta}, {"clamp_log_zero", c.clamp_log_zero}};
}

namespace {

std::size_t count_positives(const FeatureSet& data, std::span<const std::size_t> batch) {
  std::size_t n = 0;
  for (auto i : batch) n += data.boxes[i].has_value() ? 1 : 0;
  return n;
}

void check_heads(const FeatureSet& data, const ClassifierHead& cls, const DetectionHead& det) {
  if (cls.dim != data.dim || det.dim != data.dim) {
    fail(ErrorCode::kShapeMismatch, "head dimension does not match features");
  }
}

}  // namespace

double batch_objective(const FeatureSet& data, std::span<const std::size_t> batch,
                       const ClassifierHead& cls, const DetectionHead& det, const SceConfig& sce,
                       double bbox_lambda, double weight_decay, bool train_detection) {
  if (batch.empty()) fail(ErrorCode::kEmptyTrainingSet, "empty batch");
  check_heads(data, cls, det);
  double cls_loss = 0.0;
  double det_loss = 0.0;
  for (auto i : batch) {
    const auto out = head_forward_classify(data.feature(i), cls);
    const auto t = one_hot(data.labels[i]);
    cls_loss += sce_loss(t, out.probs, sce);
    if (train_detection && data.boxes[i]) {
      det_loss += bbox_loss(head_forward_detect(data.feature(i), det), *data.boxes[i]);
    }
  }
  const std::size_t positives = train_detection ? count_positives(data, batch) : 0;
  double total = cls_loss / static_cast<double>(batch.size());
  if (positives > 0) total += bbox_lambda * det_loss / static_cast<double>(positives);
  total += 0.5 * weight_decay * (squared_norm(cls.weight) + squared_norm(det.weight));
  return total;
}

HeadGradients head_gradients(const FeatureSet& data, std::span<const std::size_t> batch,
                             const ClassifierHead& cls, const DetectionHead& det,
                             const SceConfig& sce, double bbox_lambda, double weight_decay,
                             bool train_detection) {
  if (batch.empty()) fail(ErrorCode::kEmptyTrainingSet, "empty batch");
  check_heads(data, cls, det);
  const std::size_t d = data.dim;
  HeadGradients g;
  g.cls_weight.assign(2 * d, 0.0);
  g.cls_bias.assign(2, 0.0);
  g.det_weight.assign(4 * d, 0.0);
  g.det_bias.assign(4, 0.0);

  const double cls_scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t positives = train_detection ? count_positives(data, batch) : 0;
  const double det_scale = positives > 0 ? bbox_lambda / static_cast<double>(positives) : 0.0;

  for (auto i : batch) {
    const auto f = data.feature(i);
    const auto out = head_forward_classify(f, cls);
    const auto t = one_hot(data.labels[i]);
    const auto dz = sce_grad_logits(t, out.probs, sce);
    for (std::size_t o = 0; o < 2; ++o) {
      const double go = cls_scale * dz[o];
      g.cls_bias[o] += go;
      double* gw = g.cls_weight.data() + o * d;
      for (std::size_t k = 0; k < d; ++k) gw[k] += go * f[k];
    }
    if (det_scale > 0.0 && data.boxes[i]) {
      const Box pred = head_forward_detect(f, det);
      for (std::size_t o = 0; o < 4; ++o) {
        const double dl = smooth_l1_grad(pred[o] - (*data.boxes[i])[o]);
        const double go = det_scale * dl * pred[o] * (1.0 - pred[o]);
        g.det_bias[o] += go;
        double* gw = g.det_weight.data() + o * d;
        for (std::size_t k = 0; k < d; ++k) gw[k] += go * f[k];
      }
    }
  }
  for (std::size_t k = 0; k < g.cls_weight.size(); ++k) g.cls_weight[k] += weight_decay * cls.weight[k];
  for (std::size_t k = 0; k < g.det_weight.size(); ++k) g.det_weight[k] += weight_decay * det.weight[k];
  return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const TrainConfig& cfg, std::size_t step) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCode::kShapeMismatch, "Adam parameter, gradient and state sizes differ");
  }
  if (step < 1) fail(ErrorCode::kInvalidArgument, "Adam step counts from 1");
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

std::pair<double, double> evaluate_loss_accuracy(const FeatureSet& data, const ClassifierHead& cls,
                                                 const DetectionHead& det, const SceConfig& sce,
                                                 double bbox_lambda, bool with_detection) {
  if (data.size() == 0) return {0.0, 0.0};
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const double loss = batch_objective(data, all, cls, det, sce, bbox_lambda, 0.0, with_detection);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = head_forward_classify(data.feature(i), cls);
    const int pred = out.probs[1] >= 0.5 ? 1 : 0;
    correct += pred == data.labels[i] ? 1 : 0;
  }
  return {loss, static_cast<double>(correct) / static_cast<double>(data.size())};
}

namespace {

TrainedHeads train_heads_impl(const FeatureSet& train, const FeatureSet& val_in, const TrainConfig& cfg,
                              const SceConfig& sce);

}  // namespace

FeatureNorm fit_feature_norm(const FeatureSet& data) {
  if (data.size() == 0) fail(ErrorCode::kEmptyTrainingSet, "cannot fit a normalization on no samples");
  const std::size_t d = data.dim;
  const double n = static_cast<double>(data.size());
  FeatureNorm norm{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = data.feature(i);
    for (std::size_t j = 0; j < d; ++j) norm.mean[j] += f[j];
  }
  for (auto& m : norm.mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = data.feature(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = f[j] - norm.mean[j];
      var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    norm.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return norm;
}

FeatureSet apply_feature_norm(const FeatureSet& data, const FeatureNorm& norm) {
  if (norm.mean.size() != data.dim) fail(ErrorCode::kShapeMismatch, "normalization width differs from features");
  FeatureSet out = data;
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    const std::size_t j = i % data.dim;
    out.features[i] = static_cast<float>((data.features[i] - norm.mean[j]) * norm.scale[j]);
  }
  return out;
}

template <std::size_t Outputs>
void fold_feature_norm(LinearHead<Outputs>& head, const FeatureNorm& norm) {
  for (std::size_t o = 0; o < Outputs; ++o) {
    double shift = 0.0;
    for (std::size_t j = 0; j < head.dim; ++j) {
      double& w = head.weight[o * head.dim + j];
      w *= norm.scale[j];
      shift += w * norm.mean[j];
    }
    head.bias[o] -= shift;
  }
}

template void fold_feature_norm<2>(LinearHead<2>&, const FeatureNorm&);
template void fold_feature_norm<4>(LinearHead<4>&, const FeatureNorm&);

TrainedHeads train_heads(const FeatureSet& train_raw, const FeatureSet& val_raw, const TrainConfig& cfg,
                         const SceConfig& sce) {
  if (!cfg.standardize) return train_heads_impl(train_raw, val_raw, cfg, sce);
  if (train_raw.size() == 0) fail(ErrorCode::kEmptyTrainingSet, "no training samples");
  const auto norm = fit_feature_norm(train_raw);
  auto result = train_heads_impl(apply_feature_norm(train_raw, norm),
                                 val_raw.size() > 0 ? apply_feature_norm(val_raw, norm) : val_raw, cfg, sce);
  fold_feature_norm(result.cls, norm);
  if (result.detection_trained) fold_feature_norm(result.det, norm);
  return result;
}

namespace {

TrainedHeads train_heads_impl(const FeatureSet& train, const FeatureSet& val_in, const TrainConfig& cfg,
                              const SceConfig& sce) {
  cfg.validate();
  sce.validate();
  if (train.size() == 0) fail(ErrorCode::kEmptyTrainingSet, "no training samples");
  const std::size_t d = train.dim;
  if (val_in.size() > 0 && val_in.dim != d) fail(ErrorCode::kShapeMismatch, "validation feature dim differs");
  const FeatureSet& val = val_in.size() > 0 ? val_in : train;
  if (val_in.size() == 0) logger()->warn("validation set is empty; selecting on training accuracy");

  TrainedHeads result;
  result.detection_trained = count_positives(train, [&] {
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }()) > 0;
  if (!result.detection_trained) {
    logger()->warn("NoPositivesForDetection: no positive samples, detection head left untrained");
  }

  Rng rng(cfg.seed);
  ClassifierHead cls(d);
  DetectionHead det(d);
  for (auto& w : cls.weight) w = 0.01 * standard_normal(rng);
  for (auto& w : det.weight) w = 0.01 * standard_normal(rng);

  AdamState s_cw(cls.weight.size()), s_cb(cls.bias.size()), s_dw(det.weight.size()), s_db(det.bias.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_acc = -1.0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      loss_sum += static_cast<double>(batch.size()) *
                  batch_objective(train, batch, cls, det, sce, cfg.bbox_lambda, 0.0, result.detection_trained);
      const auto g = head_gradients(train, batch, cls, det, sce, cfg.bbox_lambda, cfg.weight_decay,
                                    result.detection_trained);
      ++step;
      adam_step(cls.weight, g.cls_weight, s_cw, cfg, step);
      adam_step(cls.bias, g.cls_bias, s_cb, cfg, step);
      if (result.detection_trained) {
        adam_step(det.weight, g.det_weight, s_dw, cfg, step);
        adam_step(det.bias, g.det_bias, s_db, cfg, step);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    std::tie(rec.val_loss, rec.val_acc) =
        evaluate_loss_accuracy(val, cls, det, sce, cfg.bbox_lambda, result.detection_trained);
    result.history.push_back(rec);
    if (rec.val_acc > best_acc) {
      best_acc = rec.val_acc;
      result.best_epoch = epoch;
      result.cls = cls;
      result.det = det;
    }
  }
  return result;
}

}  // namespace

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," +
           format_number(r.val_loss) + "," + format_number(r.val_acc) + "\n";
  }
  return out;
}

namespace {

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }
std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

template <std::size_t Outputs>
LinearHead<Outputs> take_head(const vit::TensorArchive& a, const std::string& prefix) {
  const auto& w = a.get(prefix + ".weight");
  const auto& b = a.get(prefix + ".bias");
  if (w.dims.size() != 2 || w.dims[0] != Outputs || b.dims != std::vector<std::uint64_t>{Outputs}) {
    fail(ErrorCode::kShapeMismatch, prefix + " has the wrong shape");
  }
  LinearHead<Outputs> h;
  h.dim = static_cast<std::size_t>(w.dims[1]);
  h.weight = to_double(w.data);
  h.bias = to_double(b.data);
  return h;
}

}  // namespace

vit::TensorArchive heads_to_archive(const ClassifierHead& cls, const DetectionHead& det,
                                    const nlohmann::json& metadata) {
  vit::TensorArchive a;
  a.metadata = metadata.dump();
  a.add("cls_head.weight", {{2, cls.dim}, to_float(cls.weight)});
  a.add("cls_head.bias", {{2}, to_float(cls.bias)});
  a.add("det_head.weight", {{4, det.dim}, to_float(det.weight)});
  a.add("det_head.bias", {{4}, to_float(det.bias)});
  return a;
}

std::pair<ClassifierHead, DetectionHead> heads_from_archive(const vit::TensorArchive& archive) {
  auto cls = take_head<2>(archive, "cls_head");
  auto det = take_head<4>(archive, "det_head");
  if (cls.dim != det.dim) fail(ErrorCode::kShapeMismatch, "classification and detection heads disagree on dim");
  return {std::move(cls), std::move(det)};
}

}  // namespace nodulekit::heads
