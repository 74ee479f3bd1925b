#pragma once

#include <array>
#include <string>

#include "ct_io/ct_volume.hpp"
#include "heads/heads.hpp"
#include "patching/patching.hpp"

namespace nodulekit::pipeline {

/// A predicted box mapped back from patch fractions to the scan.
struct PlacedBox {
  ct::Vec3 center_mm{};
  std::array<double, 2> size_mm{};
  // Continuous voxel coordinates (voxel centers at integers) of the box edges.
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Inverse of the training target encoding: cx = 0.5 maps to the window's
/// center voxel start + floor(w/2), and bw = 1 spans w voxels.
PlacedBox place_box(const ct::CtVolume& volume, const patch::VoxelIndex& start, std::size_t w,
                    const heads::Box& box, long long slice_z);

/// Mid-slice drawn as a grid of gray cells with the box on top.
std::string overlay_svg(const patch::Image2D& raw_slice, const ct::HuWindow& hu, const patch::VoxelIndex& start,
                        const PlacedBox& box, int label, double probability);

}  // namespace nodulekit::pipeline
