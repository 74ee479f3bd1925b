#pragma once

#include <cstdint>
#include <filesystem>

namespace nodulekit::pipeline {

struct SynthOptions {
  std::size_t scans = 20;
  std::size_t positives_per_scan = 5;
  std::size_t negatives_per_scan = 10;
  std::size_t size = 64;  // cube side in voxels
  /// Negatives are kept far enough from nodules that a window of this size
  /// centered on them shows background only.
  std::size_t window = 32;
  std::uint64_t seed = 42;
};

struct SynthCorpus {
  std::filesystem::path scans_dir;
  std::filesystem::path annotations;
  std::filesystem::path candidates;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Writes `dir`/scans/*.mhd (MET_SHORT), annotations.csv and candidates.csv.
/// Nodules are bright Gaussian blobs on a noisy lung-density background;
/// negative candidates sit on background noise.
SynthCorpus generate_synthetic_corpus(const std::filesystem::path& dir, const SynthOptions& options);

}  // namespace nodulekit::pipeline
