#include "pipeline/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace nodulekit::pipeline {

PlacedBox place_box(const ct::CtVolume& volume, const patch::VoxelIndex& start, std::size_t w,
                    const heads::Box& box, long long slice_z) {
  const double wd = static_cast<double>(w);
  const double half = static_cast<double>(w / 2);
  const double cx = static_cast<double>(start[0]) + half + (box[0] - 0.5) * wd;
  const double cy = static_cast<double>(start[1]) + half + (box[1] - 0.5) * wd;
  const double bw = box[2] * wd;
  const double bh = box[3] * wd;
  PlacedBox p;
  p.center_mm = ct::voxel_to_world(volume, {cx, cy, static_cast<double>(slice_z)});
  p.size_mm = {bw * volume.spacing()[0], bh * volume.spacing()[1]};
  p.x0 = cx - bw / 2;
  p.x1 = cx + bw / 2;
  p.y0 = cy - bh / 2;
  p.y1 = cy + bh / 2;
  return p;
}

std::string overlay_svg(const patch::Image2D& raw_slice, const ct::HuWindow& hu, const patch::VoxelIndex& start,
                        const PlacedBox& box, int label, double probability) {
  const std::size_t n = std::max(raw_slice.width, raw_slice.height);
  const double cell = n >= 512 ? 1.0 : std::floor(512.0 / static_cast<double>(n));
  const double width = cell * static_cast<double>(raw_slice.width);
  const double height = cell * static_cast<double>(raw_slice.height);
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\" "
                "shape-rendering=\"crispEdges\">\n",
                width, height + 24, width, height + 24);
  svg += buf;
  for (std::size_t r = 0; r < raw_slice.height; ++r) {
    for (std::size_t c = 0; c < raw_slice.width; ++c) {
      const int g = static_cast<int>(std::lround(255.0 * ct::normalize_hu(raw_slice.at(r, c), hu)));
      std::snprintf(buf, sizeof buf, "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"rgb(%d,%d,%d)\"/>\n",
                    static_cast<double>(c) * cell, static_cast<double>(r) * cell, cell, cell, g, g, g);
      svg += buf;
    }
  }
  // Voxel v covers [v - 0.5, v + 0.5], so the patch edge sits at start - 0.5.
  const double bx = (box.x0 - static_cast<double>(start[0]) + 0.5) * cell;
  const double by = (box.y0 - static_cast<double>(start[1]) + 0.5) * cell;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                bx, by, (box.x1 - box.x0) * cell, (box.y1 - box.y0) * cell, label == 1 ? "#e74c3c" : "#3498db");
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"4\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"14\">label %d  p=%.4f</text>\n",
                height + 18, label, probability);
  svg += buf;
  svg += "</svg>\n";
  return svg;
}

}  // namespace nodulekit::pipeline
