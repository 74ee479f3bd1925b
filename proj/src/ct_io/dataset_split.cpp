#include "ct_io/dataset_split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "common/error.hpp"
#include "common/random.hpp"

namespace nodulekit::ct {

const char* partition_name(Partition p) noexcept {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "?";
}

const std::vector<std::string>& DatasetSplit::ids(Partition p) const {
  switch (p) {
    case Partition::kTrain: return train_ids;
    case Partition::kVal: return val_ids;
    case Partition::kTest: return test_ids;
  }
  return train_ids;
}

DatasetSplit split_dataset(const std::vector<std::string>& scan_ids, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  if (scan_ids.empty()) fail(ErrorCode::kEmptyInput, "no scan ids to split");
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorCode::kInvalidArgument, "split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "split ratios must sum to 1");
  }
  std::vector<std::string> ids = scan_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    fail(ErrorCode::kInvalidArgument, "scan ids must be unique");
  }

  Rng rng(seed);
  shuffle(ids, rng);

  const std::size_t n = ids.size();
  // The epsilon absorbs products like 0.15 * 60 landing just below an integer.
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(n) + 1e-9));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  split.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                       ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.val_ids.begin(), split.val_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

nlohmann::json to_json(const DatasetSplit& split) {
  return {{"train", split.train_ids},
          {"val", split.val_ids},
          {"test", split.test_ids},
          {"seed", split.seed}};
}

DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit s;
  try {
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.val_ids = j.at("val").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kMissingArtifact, std::string("malformed split document: ") + e.what());
  }
  return s;
}

}  // namespace nodulekit::ct
