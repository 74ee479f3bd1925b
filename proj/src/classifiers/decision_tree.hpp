#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "classifiers/dataset.hpp"
#include "common/random.hpp"
#include "json.hpp"

namespace nodulekit::ml {

struct TreeConfig {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_samples_split = 2;
  /// Features examined per split; 0 or >= dim means all of them.
  std::size_t features_per_split = 0;
};

/// Internal nodes route `x[feature] <= threshold` to `left`.
struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::array<std::size_t, 2> counts{};  // class counts; set on leaves
};

struct DecisionTreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  TreeConfig config;
};

struct SplitChoice {
  std::size_t feature = 0;
  double threshold = 0.0;
  double weighted_impurity = 0.0;  // size-weighted Gini of the two children
};

double gini(std::size_t neg, std::size_t pos) noexcept;

/// Best CART split over `features` for the samples in `indices`. Thresholds
/// are midpoints between consecutive distinct values; ties keep the lowest
/// feature, then the lowest threshold. nullopt when no feature varies.
std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::size_t> indices,
                                      std::span<const std::size_t> features);

/// CART with Gini impurity. `rng` is required only when
/// config.features_per_split restricts the candidate features.
DecisionTreeModel fit_decision_tree(const Dataset& data, const TreeConfig& config,
                                    Rng* rng = nullptr);
DecisionTreeModel fit_decision_tree(const Dataset& data, std::span<const std::size_t> sample_indices,
                                    const TreeConfig& config, Rng* rng);

Prediction predict_tree(const DecisionTreeModel& model, std::span<const float> x);

nlohmann::json to_json(const DecisionTreeModel& model);
DecisionTreeModel tree_from_json(const nlohmann::json& j);

}  // namespace nodulekit::ml
