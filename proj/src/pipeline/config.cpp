#include "pipeline/config.hpp"

#include <cmath>

#include "common/digest.hpp"
#include "common/error.hpp"

namespace nodulekit::pipeline {

namespace {

using nlohmann::json;

const std::vector<std::string> kAll = {"preprocess", "featurize", "train-heads", "train-classifier",
                                       "evaluate", "predict"};
const std::vector<std::string> kPrep = {"preprocess"};
const std::vector<std::string> kPredict = {"predict"};
const std::vector<std::string> kFeat = {"featurize", "predict"};
const std::vector<std::string> kHeadsCmds = {"train-heads", "evaluate", "predict"};
const std::vector<std::string> kClsCmds = {"train-classifier", "evaluate"};
const std::vector<std::string> kInit = {"init-encoder"};
const std::vector<std::string> kSynth = {"synth"};

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"scans_dir", KeyType::kString, "", false, kPrep, "directory searched recursively for .mhd/.mha scans"},
      {"annotations", KeyType::kString, "", false, kPrep, "annotations CSV (seriesuid,coordX,coordY,coordZ,diameter_mm)"},
      {"candidates", KeyType::kString, "", false, kPrep, "candidates CSV (seriesuid,coordX,coordY,coordZ,class)"},
      {"out_dir", KeyType::kString, "out", false, join(join(kAll, kSynth), kInit), "artifact directory"},
      {"encoder", KeyType::kString, "", false, join(kFeat, kInit), "encoder tensor archive"},
      {"archive", KeyType::kString, "", false, {"archive-inspect"}, "tensor archive to inspect"},
      {"heads", KeyType::kString, "", false, {"evaluate", "predict"}, "head archive (default <out_dir>/heads.nsta)"},
      {"scan", KeyType::kString, "", false, kPredict, "scan file (.mhd/.mha)"},
      {"center", KeyType::kString, "", false, kPredict, "world center in mm, \"x,y,z\""},
      {"overlay", KeyType::kString, "", false, kPredict, "optional SVG overlay output path"},
      {"model", KeyType::kString, "heads", false, {"evaluate"}, "heads | dt | rf | knn"},
      {"partition", KeyType::kString, "test", false, {"evaluate"}, "train | val | test"},
      {"classifier", KeyType::kString, "rf", false, {"train-classifier"}, "dt | rf | knn"},
      {"threads", KeyType::kInt, 0, false, join(kAll, kSynth), "worker threads (0 = hardware)"},
      {"log_level", KeyType::kString, "info", false, {}, "trace | debug | info | warn | error | off"},

      {"window", KeyType::kInt, 64, true, join(kAll, kSynth), "patch window w in voxels"},
      {"hu_lo", KeyType::kFloat, -1000.0, true, join(kAll, kSynth), "HU window lower bound"},
      {"hu_hi", KeyType::kFloat, 400.0, true, join(kAll, kSynth), "HU window upper bound"},
      {"image_size", KeyType::kInt, 504, true, join(join(kAll, kInit), kSynth), "encoder input size"},
      {"neg_ratio", KeyType::kFloat, 1.0, true, join(kAll, kSynth), "negatives per positive"},
      {"seed", KeyType::kInt, 42, true, join(join(kAll, kInit), kSynth), "master seed"},
      {"val_ratio", KeyType::kFloat, 0.15, true, join(kAll, kSynth), "validation share of scans"},
      {"test_ratio", KeyType::kFloat, 0.15, true, join(kAll, kSynth), "test share of scans"},
      {"head_features", KeyType::kString, "cls", true, kAll, "head input: cls | gap | cls_gap"},
      {"classifier_features", KeyType::kString, "gap", true, kAll, "classifier input: cls | gap | cls_gap"},
      {"lr", KeyType::kFloat, 1e-4, true, kAll, "Adam learning rate"},
      {"batch_size", KeyType::kInt, 32, true, kAll, "head training batch size"},
      {"weight_decay", KeyType::kFloat, 0.01, true, kAll, "weight decay on head weights"},
      {"epochs", KeyType::kInt, 100, true, kAll, "head training epochs"},
      {"adam_beta1", KeyType::kFloat, 0.9, true, kAll, "Adam beta1"},
      {"adam_beta2", KeyType::kFloat, 0.999, true, kAll, "Adam beta2"},
      {"adam_eps", KeyType::kFloat, 1e-8, true, kAll, "Adam epsilon"},
      {"bbox_lambda", KeyType::kFloat, 1.0, true, kAll, "weight of the box loss"},
      {"standardize_features", KeyType::kBool, true, true, kAll, "z-score head inputs with training statistics"},
      {"sce_alpha", KeyType::kFloat, 1.0, true, kAll, "SCE cross-entropy weight"},
      {"sce_beta", KeyType::kFloat, 1.0, true, kAll, "SCE reverse cross-entropy weight"},
      {"sce_clamp", KeyType::kFloat, -4.0, true, kAll, "log(0) replacement inside RCE"},
      {"max_depth", KeyType::kInt, 0, true, kAll, "tree depth limit (0 = unlimited)"},
      {"min_samples_split", KeyType::kInt, 2, true, kAll, "minimum node size to split"},
      {"n_trees", KeyType::kInt, 100, true, kAll, "random forest size"},
      {"max_features", KeyType::kInt, 0, true, kAll, "features per split (0 = floor(sqrt(D)))"},
      {"bootstrap", KeyType::kBool, true, true, kAll, "bootstrap resampling per tree"},
      {"knn_k", KeyType::kInt, 5, true, kAll, "neighbors for KNN"},

      {"encoder_embed_dim", KeyType::kInt, 32, false, kInit, "embedding width"},
      {"encoder_depth", KeyType::kInt, 2, false, kInit, "transformer blocks"},
      {"encoder_heads", KeyType::kInt, 4, false, kInit, "attention heads"},
      {"encoder_patch_size", KeyType::kInt, 14, false, kInit, "patch size"},
      {"encoder_pretrain_grid", KeyType::kInt, 16, false, kInit, "positional grid side"},

      {"synth_scans", KeyType::kInt, 20, false, kSynth, "number of synthetic scans"},
      {"synth_positives", KeyType::kInt, 5, false, kSynth, "nodules per scan"},
      {"synth_negatives", KeyType::kInt, 10, false, kSynth, "negative candidates per scan"},
      {"synth_size", KeyType::kInt, 64, false, kSynth, "volume side in voxels"},
  };
  return keys;
}

json config_schema() {
  json keys = json::array();
  for (const auto& k : config_keys()) {
    const char* type = k.type == KeyType::kString ? "string"
                       : k.type == KeyType::kInt  ? "integer"
                       : k.type == KeyType::kFloat ? "number"
                                                   : "boolean";
    keys.push_back({{"name", k.name},
                    {"type", type},
                    {"default", k.default_value},
                    {"hashed", k.hashed},
                    {"commands", k.commands},
                    {"help", k.help}});
  }
  return {{"keys", std::move(keys)}};
}

FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "cls") return FeatureKind::kCls;
  if (s == "gap") return FeatureKind::kGap;
  if (s == "cls_gap") return FeatureKind::kClsGap;
  fail(ErrorCode::kInvalidArgument, "feature kind must be cls, gap or cls_gap, got '" + s + "'");
}

const char* feature_kind_name(FeatureKind k) noexcept {
  switch (k) {
    case FeatureKind::kCls: return "cls";
    case FeatureKind::kGap: return "gap";
    case FeatureKind::kClsGap: return "cls_gap";
  }
  return "?";
}

namespace {

void check_type(const KeySpec& spec, json& value) {
  const std::string name = spec.name;
  switch (spec.type) {
    case KeyType::kString:
      if (!value.is_string()) fail(ErrorCode::kInvalidArgument, name + " must be a string");
      break;
    case KeyType::kInt:
      if (value.is_number_float() && std::floor(value.get<double>()) == value.get<double>()) {
        value = static_cast<long long>(value.get<double>());
      }
      if (!value.is_number_integer()) fail(ErrorCode::kInvalidArgument, name + " must be an integer");
      break;
    case KeyType::kFloat:
      if (!value.is_number()) fail(ErrorCode::kInvalidArgument, name + " must be a number");
      value = value.get<double>();
      break;
    case KeyType::kBool:
      if (!value.is_boolean()) fail(ErrorCode::kInvalidArgument, name + " must be true or false");
      break;
  }
}

std::size_t non_negative(const json& raw, const char* key) {
  const auto v = raw.at(key).get<long long>();
  if (v < 0) fail(ErrorCode::kInvalidArgument, std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

std::size_t positive(const json& raw, const char* key) {
  const auto v = non_negative(raw, key);
  if (v == 0) fail(ErrorCode::kInvalidArgument, std::string(key) + " must be >= 1");
  return v;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "configuration must be a JSON object");
  json raw = json::object();
  for (const auto& k : config_keys()) raw[k.name] = k.default_value;
  for (const auto& [key, value] : j.items()) {
    const KeySpec* spec = nullptr;
    for (const auto& k : config_keys()) {
      if (key == k.name) spec = &k;
    }
    if (spec == nullptr) fail(ErrorCode::kInvalidArgument, "unknown configuration key '" + key + "'");
    json v = value;
    check_type(*spec, v);
    raw[key] = std::move(v);
  }

  PipelineConfig c;
  c.raw = raw;
  auto str = [&](const char* key) { return raw.at(key).get<std::string>(); };
  auto num = [&](const char* key) {
    const double v = raw.at(key).get<double>();
    if (!std::isfinite(v)) fail(ErrorCode::kInvalidArgument, std::string(key) + " must be finite");
    return v;
  };
  c.scans_dir = str("scans_dir");
  c.annotations = str("annotations");
  c.candidates = str("candidates");
  c.out_dir = str("out_dir");
  c.encoder = str("encoder");
  c.archive = str("archive");
  c.heads = str("heads");
  c.scan = str("scan");
  c.center = str("center");
  c.overlay = str("overlay");
  c.model = str("model");
  c.partition = str("partition");
  c.classifier = str("classifier");
  c.threads = non_negative(raw, "threads");
  const auto level = str("log_level");
  if (level != "trace" && level != "debug" && level != "info" && level != "warn" && level != "error" &&
      level != "off") {
    fail(ErrorCode::kInvalidArgument, "log_level must be trace, debug, info, warn, error or off");
  }

  c.window = positive(raw, "window");
  c.hu = {num("hu_lo"), num("hu_hi")};
  ct::validate(c.hu);
  c.image_size = positive(raw, "image_size");
  c.neg_ratio = num("neg_ratio");
  if (c.neg_ratio < 0) fail(ErrorCode::kInvalidArgument, "neg_ratio must be >= 0");
  c.seed = static_cast<std::uint64_t>(raw.at("seed").get<long long>());
  c.val_ratio = num("val_ratio");
  c.test_ratio = num("test_ratio");
  if (c.val_ratio < 0 || c.test_ratio < 0 || c.val_ratio + c.test_ratio >= 1.0) {
    fail(ErrorCode::kInvalidArgument, "val_ratio and test_ratio must be >= 0 and sum below 1");
  }
  c.head_features = parse_feature_kind(str("head_features"));
  c.classifier_features = parse_feature_kind(str("classifier_features"));

  c.train.lr = num("lr");
  c.train.batch_size = positive(raw, "batch_size");
  c.train.weight_decay = num("weight_decay");
  c.train.epochs = positive(raw, "epochs");
  c.train.adam_beta1 = num("adam_beta1");
  c.train.adam_beta2 = num("adam_beta2");
  c.train.adam_eps = num("adam_eps");
  c.train.seed = c.seed;
  c.train.bbox_lambda = num("bbox_lambda");
  c.train.standardize = raw.at("standardize_features").get<bool>();
  c.train.validate();
  c.sce.alpha = num("sce_alpha");
  c.sce.beta = num("sce_beta");
  c.sce.clamp_log_zero = num("sce_clamp");
  c.sce.validate();

  c.max_depth = non_negative(raw, "max_depth");
  c.min_samples_split = non_negative(raw, "min_samples_split");
  c.n_trees = positive(raw, "n_trees");
  c.max_features = non_negative(raw, "max_features");
  c.bootstrap = raw.at("bootstrap").get<bool>();
  c.knn_k = positive(raw, "knn_k");

  c.encoder_embed_dim = positive(raw, "encoder_embed_dim");
  c.encoder_depth = non_negative(raw, "encoder_depth");
  c.encoder_heads = positive(raw, "encoder_heads");
  c.encoder_patch_size = positive(raw, "encoder_patch_size");
  c.encoder_pretrain_grid = positive(raw, "encoder_pretrain_grid");

  c.synth_scans = positive(raw, "synth_scans");
  c.synth_positives = non_negative(raw, "synth_positives");
  c.synth_negatives = non_negative(raw, "synth_negatives");
  c.synth_size = positive(raw, "synth_size");
  return c;
}

std::string config_hash(const PipelineConfig& config) {
  json hashed = json::object();  // object keys serialize sorted
  for (const auto& k : config_keys()) {
    if (k.hashed) hashed[k.name] = config.raw.at(k.name);
  }
  return sha256_hex(hashed.dump());
}

}  // namespace nodulekit::pipeline
