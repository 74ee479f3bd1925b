#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nodulekit::ml {

/// Row-major feature matrix with binary labels.
struct Dataset {
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span(features).subspan(i * dim, dim);
  }
  float value(std::size_t i, std::size_t f) const { return features[i * dim + f]; }
  void add(std::span<const float> x, int label);
};

struct Prediction {
  int label = 0;
  double score = 0.0;  // positive-class score in [0, 1]
};

/// Score threshold shared by every classifier: ties at 0.5 go positive.
inline int label_from_score(double score) noexcept { return score >= 0.5 ? 1 : 0; }

}  // namespace nodulekit::ml
