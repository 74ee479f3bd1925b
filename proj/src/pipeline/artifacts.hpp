#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "classifiers/dataset.hpp"
#include "heads/heads.hpp"
#include "json.hpp"
#include "patching/patch_store.hpp"
#include "pipeline/config.hpp"

namespace nodulekit::pipeline {

namespace fs = std::filesystem;

/// Artifact layout under out_dir.
struct Layout {
  fs::path root;
  fs::path split() const { return root / "split.json"; }
  fs::path patches_dir() const { return root / "patches"; }
  fs::path patches(const std::string& part) const { return patches_dir() / part; }
  fs::path patches_meta() const { return patches_dir() / "meta.json"; }
  fs::path features_dir() const { return root / "features"; }
  fs::path features_meta() const { return features_dir() / "meta.json"; }
  fs::path heads() const { return root / "heads.nsta"; }
  fs::path history() const { return root / "heads_history.csv"; }
  fs::path classifier(const std::string& type) const { return root / ("classifier_" + type + ".json"); }
  fs::path eval(const std::string& model, const std::string& part, const std::string& suffix) const {
    return root / "eval" / (model + "_" + part + suffix);
  }
  fs::path encoder() const { return root / "encoder.nsta"; }
};

inline const std::vector<std::string> kPartitions = {"train", "val", "test"};

/// CLS and GAP matrices of one partition plus its manifest rows.
struct FeatureTable {
  std::size_t dim = 0;
  std::vector<patch::ManifestRow> rows;
  std::vector<float> cls;
  std::vector<float> gap;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t width(FeatureKind kind) const noexcept { return kind == FeatureKind::kClsGap ? 2 * dim : dim; }
  /// Writes the selected feature of sample i into `out` (width(kind) floats).
  void select(std::size_t i, FeatureKind kind, std::span<float> out) const;
};

FeatureTable load_features(const Layout& layout, const std::string& part, const PipelineConfig& config);
void save_features(const Layout& layout, const std::string& part, const FeatureTable& table);

heads::FeatureSet to_head_set(const FeatureTable& table, FeatureKind kind);
ml::Dataset to_dataset(const FeatureTable& table, FeatureKind kind);

nlohmann::json read_json(const fs::path& path, const std::string& what);
void write_json(const fs::path& path, const nlohmann::json& doc);

}  // namespace nodulekit::pipeline
