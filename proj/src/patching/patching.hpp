#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ct_io/ct_volume.hpp"
#include "ct_io/luna_csv.hpp"

namespace nodulekit::patch {

using VoxelIndex = std::array<long long, 3>;

/// Single-channel image, row-major (row = y, col = x).
struct Image2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// Channel-major 3 x H x W image.
struct Image3C {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t c, std::size_t row, std::size_t col) const {
    return pixels[(c * height + row) * width + col];
  }
};

/// w x w x w block, x-fastest, plus where it starts in the source volume.
struct Window3D {
  std::size_t size = 0;
  VoxelIndex start{};
  bool clamped = false;
  std::vector<float> values;

  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return values[(k * size + j) * size + i];
  }
};

struct BoxTarget {
  double cx = 0.5;
  double cy = 0.5;
  double bw = 0.0;
  double bh = 0.0;
};

struct PatchSample {
  std::string scan_id;
  VoxelIndex center{};
  std::size_t window = 0;
  Image3C image;
  int label = 0;
  std::optional<BoxTarget> bbox;
  bool clamped = false;
};

float voxel_at(const ct::CtVolume& volume, long long x, long long y, long long z);

/// Start index of the window on one axis: c - floor(w/2), shifted inward so
/// that [start, start + w) fits in [0, n).
long long window_start(long long center, std::size_t w, std::size_t n);

Window3D extract_window(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w);

/// The z = z_c plane of extract_window(volume, center, w).
Image2D extract_mid_slice(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w,
                          VoxelIndex* start_out = nullptr, bool* clamped_out = nullptr);

Image3C replicate_channels(const Image2D& image);

/// Bilinear resampling with half-pixel centers:
/// src = (i + 0.5) * in / out - 0.5, clamped to [0, in - 1].
Image2D resize_bilinear(const Image2D& image, std::size_t out_h, std::size_t out_w);

struct SampleOptions {
  std::size_t window = 64;
  ct::HuWindow hu;
  std::size_t image_size = 504;
};

struct BuildResult {
  std::vector<PatchSample> samples;
  std::size_t skipped = 0;
};

/// Builds samples for the candidates of one scan (candidates for other scans
/// are ignored). Positives take their box size from the nearest annotation of
/// the same scan and are skipped when that scan has no annotation.
BuildResult build_samples(const ct::CtVolume& volume, const std::string& scan_id,
                          const std::vector<ct::Candidate>& candidates,
                          const std::vector<ct::NoduleAnnotation>& annotations,
                          const SampleOptions& options);

struct NegativeSelection {
  std::vector<ct::Candidate> negatives;
  std::size_t requested = 0;
  std::size_t eligible = 0;
  bool insufficient = false;
};

/// Picks ceil(ratio * #positives) class-0 candidates uniformly without
/// replacement, after dropping any that lie within one diameter of an
/// annotated nodule in the same scan. Selection keeps input order.
NegativeSelection sample_negatives(const std::vector<ct::Candidate>& candidates,
                                   const std::vector<ct::NoduleAnnotation>& annotations,
                                   double ratio, std::uint64_t seed);

}  // namespace nodulekit::patch
