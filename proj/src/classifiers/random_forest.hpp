#pragma once

#include <cstdint>
#include <vector>

#include "classifiers/decision_tree.hpp"

namespace nodulekit::ml {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(dim))
  bool bootstrap = true;
  TreeConfig tree;
  std::uint64_t master_seed = 42;
  std::size_t workers = 1;
};

struct RandomForestModel {
  std::vector<DecisionTreeModel> trees;
  std::vector<std::uint64_t> seeds;
  std::size_t features_per_split = 0;
  bool bootstrap = true;
};

/// Each tree gets seed derive_seed(master_seed, t), a same-size bootstrap
/// resample (when enabled) and `features_per_split` random features per split.
RandomForestModel fit_random_forest(const Dataset& data, const ForestConfig& config);

/// Mean of tree scores; label by label_from_score.
Prediction predict_forest(const RandomForestModel& model, std::span<const float> x);

nlohmann::json to_json(const RandomForestModel& model);
RandomForestModel forest_from_json(const nlohmann::json& j);

}  // namespace nodulekit::ml
