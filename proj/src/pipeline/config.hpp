#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ct_io/ct_volume.hpp"
#include "heads/heads.hpp"
#include "heads/losses.hpp"
#include "json.hpp"

namespace nodulekit::pipeline {

enum class KeyType { kString, kInt, kFloat, kBool };

/// One configuration key. Command-line flags are the kebab-case spelling.
struct KeySpec {
  const char* name;
  KeyType type;
  nlohmann::json default_value;
  /// Hashed keys shape the artifacts; paths and per-command selectors are not.
  bool hashed;
  std::vector<std::string> commands;
  const char* help;
};

const std::vector<KeySpec>& config_keys();
/// Schema document consumed by the CLI and docs.
nlohmann::json config_schema();

enum class FeatureKind { kCls, kGap, kClsGap };
FeatureKind parse_feature_kind(const std::string& s);
const char* feature_kind_name(FeatureKind k) noexcept;

struct PipelineConfig {
  nlohmann::json raw;  // every key, defaults filled in

  std::string scans_dir;
  std::string annotations;
  std::string candidates;
  std::string out_dir;
  std::string encoder;
  std::string archive;
  std::string heads;
  std::string scan;
  std::string center;
  std::string overlay;
  std::string model;
  std::string partition;
  std::string classifier;
  std::size_t threads = 0;

  std::size_t window = 64;
  ct::HuWindow hu;
  std::size_t image_size = 504;
  double neg_ratio = 1.0;
  std::uint64_t seed = 42;
  double val_ratio = 0.15;
  double test_ratio = 0.15;
  FeatureKind head_features = FeatureKind::kCls;
  FeatureKind classifier_features = FeatureKind::kGap;
  heads::TrainConfig train;
  heads::SceConfig sce;
  std::size_t max_depth = 0;
  std::size_t min_samples_split = 2;
  std::size_t n_trees = 100;
  std::size_t max_features = 0;
  bool bootstrap = true;
  std::size_t knn_k = 5;

  std::size_t encoder_embed_dim = 32;
  std::size_t encoder_depth = 2;
  std::size_t encoder_heads = 4;
  std::size_t encoder_patch_size = 14;
  std::size_t encoder_pretrain_grid = 16;

  std::size_t synth_scans = 20;
  std::size_t synth_positives = 5;
  std::size_t synth_negatives = 10;
  std::size_t synth_size = 64;
};

/// Applies defaults, rejects unknown keys and ill-typed values (InvalidArgument).
PipelineConfig config_from_json(const nlohmann::json& j);

/// SHA-256 over the canonical JSON of the hashed keys.
std::string config_hash(const PipelineConfig& config);

}  // namespace nodulekit::pipeline
