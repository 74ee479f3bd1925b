#include "classifiers/random_forest.hpp"

#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/parallel.hpp"

namespace nodulekit::ml {

RandomForestModel fit_random_forest(const Dataset& data, const ForestConfig& config) {
  if (data.size() == 0) fail(ErrorCode::kEmptyInput, "random forest needs at least one record");
  if (config.n_trees == 0) fail(ErrorCode::kInvalidArgument, "random forest needs at least one tree");
  RandomForestModel model;
  model.bootstrap = config.bootstrap;
  model.features_per_split = config.features_per_split != 0
                                 ? std::min(config.features_per_split, data.dim)
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(data.dim)))));
  model.seeds.resize(config.n_trees);
  for (std::size_t t = 0; t < config.n_trees; ++t) model.seeds[t] = derive_seed(config.master_seed, t);
  model.trees.resize(config.n_trees);

  TreeConfig tree_cfg = config.tree;
  tree_cfg.features_per_split = model.features_per_split;
  parallel_for(config.n_trees, config.workers, [&](std::size_t t) {
    Rng rng(model.seeds[t]);
    std::vector<std::size_t> sample(data.size());
    if (config.bootstrap) {
      for (auto& s : sample) s = uniform_index(rng, data.size());
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    model.trees[t] = fit_decision_tree(data, sample, tree_cfg, &rng);
  });
  return model;
}

Prediction predict_forest(const RandomForestModel& model, std::span<const float> x) {
  double total = 0.0;
  for (const auto& tree : model.trees) total += predict_tree(tree, x).score;
  const double score = total / static_cast<double>(model.trees.size());
  return {label_from_score(score), score};
}

nlohmann::json to_json(const RandomForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) trees.push_back(to_json(t));
  return {{"features_per_split", model.features_per_split},
          {"bootstrap", model.bootstrap},
          {"seeds", model.seeds},
          {"trees", std::move(trees)}};
}

RandomForestModel forest_from_json(const nlohmann::json& j) {
  try {
    RandomForestModel m;
    m.features_per_split = j.at("features_per_split").get<std::size_t>();
    m.bootstrap = j.at("bootstrap").get<bool>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
    if (m.trees.empty() || m.trees.size() != m.seeds.size()) {
      fail(ErrorCode::kMissingArtifact, "forest document has inconsistent trees and seeds");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMissingArtifact, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace nodulekit::ml
