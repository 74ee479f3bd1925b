#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patching/patching.hpp"

namespace nodulekit::patch {

/// One manifest row; the image lives at the same index in the binary file.
struct ManifestRow {
  std::string scan_id;
  VoxelIndex center{};
  std::size_t window = 0;
  int label = 0;
  std::optional<BoxTarget> bbox;
  bool clamped = false;
};

inline constexpr const char* kManifestHeader = "scan_id,xc,yc,zc,w,label,cx,cy,bw,bh,clamped_flag";

ManifestRow manifest_row(const PatchSample& sample);
std::string write_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest(std::string_view csv_text);

/// A persisted patch set: `<stem>.bin` holds float32 LE samples x 3 x H x W,
/// `<stem>.csv` the manifest.
struct PatchSet {
  std::size_t image_size = 0;
  std::vector<ManifestRow> rows;
  std::vector<float> images;

  std::size_t image_floats() const noexcept { return 3 * image_size * image_size; }
  std::span<const float> image(std::size_t i) const {
    return std::span(images).subspan(i * image_floats(), image_floats());
  }
};

void write_patch_set(const std::filesystem::path& stem, const std::vector<PatchSample>& samples);
PatchSet read_patch_set(const std::filesystem::path& stem, std::size_t image_size);

}  // namespace nodulekit::patch
