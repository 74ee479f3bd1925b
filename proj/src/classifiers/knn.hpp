#pragma once

#include "classifiers/dataset.hpp"
#include "json.hpp"

namespace nodulekit::ml {

struct KnnModel {
  Dataset data;
  std::size_t k = 5;
};

/// Validates 1 <= k <= |data| and stores a copy of the data.
KnnModel fit_knn(const Dataset& data, std::size_t k);

/// Exact Euclidean search; equal distances prefer the lower sample index.
/// Score is the positive fraction among the k neighbors.
Prediction knn_predict(const KnnModel& model, std::span<const float> query);

/// Stored features travel as base64 float32 LE.
nlohmann::json to_json(const KnnModel& model);
KnnModel knn_from_json(const nlohmann::json& j);

}  // namespace nodulekit::ml
