#include "classifiers/knn.hpp"

#include <algorithm>
#include <cstring>

#include "common/binary_io.hpp"
#include "common/digest.hpp"
#include "common/error.hpp"

namespace nodulekit::ml {

KnnModel fit_knn(const Dataset& data, std::size_t k) {
  if (k < 1 || k > data.size()) {
    fail(ErrorCode::kKExceedsDataset, "k = " + std::to_string(k) + " but only " +
                                          std::to_string(data.size()) + " stored samples");
  }
  return {data, k};
}

Prediction knn_predict(const KnnModel& model, std::span<const float> query) {
  const auto& data = model.data;
  if (model.k < 1 || model.k > data.size()) {
    fail(ErrorCode::kKExceedsDataset, "k exceeds the number of stored samples");
  }
  if (query.size() != data.dim) fail(ErrorCode::kShapeMismatch, "query dimension differs from stored data");
  std::vector<std::pair<double, std::size_t>> dist(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = data.row(i);
    double s = 0.0;
    for (std::size_t f = 0; f < data.dim; ++f) {
      const double d = static_cast<double>(row[f]) - query[f];
      s += d * d;
    }
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(model.k), dist.end());
  std::size_t positives = 0;
  for (std::size_t n = 0; n < model.k; ++n) positives += data.labels[dist[n].second] == 1 ? 1 : 0;
  const double score = static_cast<double>(positives) / static_cast<double>(model.k);
  return {label_from_score(score), score};
}

nlohmann::json to_json(const KnnModel& model) {
  ByteWriter w;
  w.put_floats(model.data.features);
  return {{"k", model.k},
          {"dim", model.data.dim},
          {"count", model.data.size()},
          {"labels", model.data.labels},
          {"features_b64", base64_encode(w.bytes())}};
}

KnnModel knn_from_json(const nlohmann::json& j) {
  try {
    KnnModel m;
    m.k = j.at("k").get<std::size_t>();
    m.data.dim = j.at("dim").get<std::size_t>();
    m.data.labels = j.at("labels").get<std::vector<int>>();
    const auto bytes = base64_decode(j.at("features_b64").get<std::string>());
    if (bytes.size() != m.data.labels.size() * m.data.dim * sizeof(float) ||
        m.data.labels.size() != j.at("count").get<std::size_t>()) {
      fail(ErrorCode::kPayloadSizeMismatch, "KNN payload does not match count x dim");
    }
    m.data.features.resize(m.data.labels.size() * m.data.dim);
    ByteReader r(bytes, ErrorCode::kPayloadSizeMismatch);
    r.get_floats(m.data.features);
    if (m.k < 1 || m.k > m.data.size()) fail(ErrorCode::kKExceedsDataset, "stored k exceeds stored samples");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMissingArtifact, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace nodulekit::ml
