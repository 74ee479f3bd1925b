#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace nodulekit::ct {

enum class Partition { kTrain, kVal, kTest };

const char* partition_name(Partition p) noexcept;

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;

  const std::vector<std::string>& ids(Partition p) const;
};

/// Scan-level split. Ids are sorted, shuffled with `seed`, then cut:
/// val and test get floor(ratio * N) scans, train the remainder.
/// Each partition is returned in sorted order.
DatasetSplit split_dataset(const std::vector<std::string>& scan_ids,
                           std::array<double, 3> ratios, std::uint64_t seed);

inline DatasetSplit split_dataset(const std::vector<std::string>& scan_ids, std::uint64_t seed) {
  return split_dataset(scan_ids, {0.70, 0.15, 0.15}, seed);
}

nlohmann::json to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& j);

}  // namespace nodulekit::ct
