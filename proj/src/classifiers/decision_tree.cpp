#include "classifiers/decision_tree.hpp"

#include <algorithm>
#include <numeric>

#include "common/error.hpp"

namespace nodulekit::ml {

void Dataset::add(std::span<const float> x, int label) {
  if (dim == 0 && features.empty()) dim = x.size();
  if (x.size() != dim) fail(ErrorCode::kShapeMismatch, "feature length differs within a dataset");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

double gini(std::size_t neg, std::size_t pos) noexcept {
  const double n = static_cast<double>(neg + pos);
  if (n == 0.0) return 0.0;
  const double p0 = static_cast<double>(neg) / n;
  const double p1 = static_cast<double>(pos) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

namespace {

// Improvements smaller than this count as ties.
constexpr double kTieTolerance = 1e-12;

}  // namespace

std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::size_t> indices,
                                      std::span<const std::size_t> features) {
  std::vector<std::size_t> sorted_features(features.begin(), features.end());
  std::sort(sorted_features.begin(), sorted_features.end());

  std::size_t total_pos = 0;
  for (auto i : indices) total_pos += data.labels[i] == 1 ? 1 : 0;
  const std::size_t total = indices.size();
  const std::size_t total_neg = total - total_pos;

  std::optional<SplitChoice> best;
  std::vector<std::pair<float, int>> column(total);
  for (std::size_t f : sorted_features) {
    for (std::size_t k = 0; k < total; ++k) {
      column[k] = {data.value(indices[k], f), data.labels[indices[k]]};
    }
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t left_neg = 0;
    std::size_t left_pos = 0;
    for (std::size_t k = 0; k + 1 < total; ++k) {
      (column[k].second == 1 ? left_pos : left_neg) += 1;
      if (column[k].first == column[k + 1].first) continue;
      const std::size_t left_n = k + 1;
      const std::size_t right_n = total - left_n;
      const double impurity =
          (static_cast<double>(left_n) * gini(left_neg, left_pos) +
           static_cast<double>(right_n) * gini(total_neg - left_neg, total_pos - left_pos)) /
          static_cast<double>(total);
      if (!best || impurity < best->weighted_impurity - kTieTolerance) {
        const double threshold =
            0.5 * (static_cast<double>(column[k].first) + static_cast<double>(column[k + 1].first));
        best = SplitChoice{f, threshold, impurity};
      }
    }
  }
  return best;
}

namespace {

struct Builder {
  const Dataset& data;
  const TreeConfig& config;
  Rng* rng;
  DecisionTreeModel model;

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> all(data.dim);
    std::iota(all.begin(), all.end(), 0);
    if (config.features_per_split == 0 || config.features_per_split >= data.dim) return all;
    if (rng == nullptr) fail(ErrorCode::kInternal, "feature subsampling requires an RNG");
    shuffle(all, *rng);
    return all;
  }

  std::size_t grow(std::vector<std::size_t> indices, std::size_t depth) {
    const std::size_t id = model.nodes.size();
    model.nodes.emplace_back();
    std::size_t pos = 0;
    for (auto i : indices) pos += data.labels[i] == 1 ? 1 : 0;
    const std::size_t neg = indices.size() - pos;

    const bool pure = pos == 0 || neg == 0;
    const bool depth_reached = config.max_depth != 0 && depth >= config.max_depth;
    const bool too_small = indices.size() < std::max<std::size_t>(config.min_samples_split, 2);
    std::optional<SplitChoice> split;
    if (!pure && !depth_reached && !too_small) {
      const auto order = candidate_features();
      const std::size_t m = (config.features_per_split == 0 || config.features_per_split >= data.dim)
                                ? data.dim
                                : config.features_per_split;
      split = best_split(data, indices, std::span(order).first(m));
      // Like common RF implementations, keep drawing features past m until
      // one of them can split the node.
      for (std::size_t f = m; !split && f < order.size(); ++f) {
        split = best_split(data, indices, std::span(order).subspan(f, 1));
      }
    }
    if (!split) {
      model.nodes[id].leaf = true;
      model.nodes[id].counts = {neg, pos};
      return id;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : indices) {
      (static_cast<double>(data.value(i, split->feature)) <= split->threshold ? left : right).push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();
    const std::size_t l = grow(std::move(left), depth + 1);
    const std::size_t r = grow(std::move(right), depth + 1);
    auto& node = model.nodes[id];
    node.leaf = false;
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = r;
    node.counts = {neg, pos};
    return id;
  }
};

}  // namespace

DecisionTreeModel fit_decision_tree(const Dataset& data, std::span<const std::size_t> sample_indices,
                                    const TreeConfig& config, Rng* rng) {
  if (sample_indices.empty()) fail(ErrorCode::kEmptyInput, "decision tree needs at least one record");
  Builder b{data, config, rng, {}};
  b.model.config = config;
  b.grow({sample_indices.begin(), sample_indices.end()}, 0);
  return std::move(b.model);
}

DecisionTreeModel fit_decision_tree(const Dataset& data, const TreeConfig& config, Rng* rng) {
  if (data.size() == 0) fail(ErrorCode::kEmptyInput, "decision tree needs at least one record");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return fit_decision_tree(data, all, config, rng);
}

Prediction predict_tree(const DecisionTreeModel& model, std::span<const float> x) {
  std::size_t id = 0;
  while (!model.nodes[id].leaf) {
    const auto& n = model.nodes[id];
    id = static_cast<double>(x[n.feature]) <= n.threshold ? n.left : n.right;
  }
  const auto& leaf = model.nodes[id];
  const double total = static_cast<double>(leaf.counts[0] + leaf.counts[1]);
  const double score = static_cast<double>(leaf.counts[1]) / total;
  return {label_from_score(score), score};
}

nlohmann::json to_json(const DecisionTreeModel& model) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : model.nodes) {
    if (n.leaf) {
      nodes.push_back({{"counts", {n.counts[0], n.counts[1]}}});
    } else {
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  return {{"max_depth", model.config.max_depth},
          {"min_samples_split", model.config.min_samples_split},
          {"features_per_split", model.config.features_per_split},
          {"nodes", std::move(nodes)}};
}

DecisionTreeModel tree_from_json(const nlohmann::json& j) {
  try {
    DecisionTreeModel m;
    m.config.max_depth = j.at("max_depth").get<std::size_t>();
    m.config.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    m.config.features_per_split = j.value("features_per_split", std::size_t{0});
    for (const auto& jn : j.at("nodes")) {
      TreeNode n;
      if (jn.contains("counts")) {
        n.leaf = true;
        n.counts = {jn.at("counts").at(0).get<std::size_t>(), jn.at("counts").at(1).get<std::size_t>()};
        if (n.counts[0] + n.counts[1] == 0) fail(ErrorCode::kMissingArtifact, "tree leaf with no samples");
      } else {
        n.leaf = false;
        n.feature = jn.at("feature").get<std::size_t>();
        n.threshold = jn.at("threshold").get<double>();
        n.left = jn.at("left").get<std::size_t>();
        n.right = jn.at("right").get<std::size_t>();
      }
      m.nodes.push_back(n);
    }
    if (m.nodes.empty()) fail(ErrorCode::kMissingArtifact, "tree has no nodes");
    // Children always follow their parent, so this also rules out cycles.
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
      const auto& n = m.nodes[i];
      if (!n.leaf && (n.left <= i || n.right <= i || n.left >= m.nodes.size() || n.right >= m.nodes.size())) {
        fail(ErrorCode::kMissingArtifact, "tree node " + std::to_string(i) + " has invalid children");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMissingArtifact, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace nodulekit::ml
