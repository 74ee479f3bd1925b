#include "patching/patching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/error.hpp"
#include "common/log.hpp"
#include "common/random.hpp"

namespace nodulekit::patch {

float voxel_at(const ct::CtVolume& volume, long long x, long long y, long long z) {
  const auto& d = volume.dims();
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<long long>(d.nx) ||
      y >= static_cast<long long>(d.ny) || z >= static_cast<long long>(d.nz)) {
    fail(ErrorCode::kOutOfBounds, "voxel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                                      std::to_string(z) + ") outside volume");
  }
  return volume.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                   static_cast<std::size_t>(z));
}

long long window_start(long long center, std::size_t w, std::size_t n) {
  const auto half = static_cast<long long>(w / 2);
  const auto max_start = static_cast<long long>(n) - static_cast<long long>(w);
  return std::clamp(center - half, 0LL, max_start);
}

namespace {

void check_window(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w) {
  if (w < 1) fail(ErrorCode::kInvalidArgument, "window size must be >= 1");
  const auto& d = volume.dims();
  const std::array<std::size_t, 3> n = {d.nx, d.ny, d.nz};
  for (int a = 0; a < 3; ++a) {
    if (w > n[a]) {
      fail(ErrorCode::kWindowLargerThanVolume,
           "window " + std::to_string(w) + " exceeds volume extent " + std::to_string(n[a]) +
               " on axis " + std::to_string(a));
    }
    if (center[a] < 0 || center[a] >= static_cast<long long>(n[a])) {
      fail(ErrorCode::kOutOfBounds, "window center outside volume on axis " + std::to_string(a));
    }
  }
}

VoxelIndex starts_for(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w,
                      bool& clamped) {
  const auto& d = volume.dims();
  const std::array<std::size_t, 3> n = {d.nx, d.ny, d.nz};
  VoxelIndex start{};
  clamped = false;
  for (int a = 0; a < 3; ++a) {
    start[a] = window_start(center[a], w, n[a]);
    if (start[a] != center[a] - static_cast<long long>(w / 2)) clamped = true;
  }
  return start;
}

}  // namespace

Window3D extract_window(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w) {
  check_window(volume, center, w);
  Window3D out;
  out.size = w;
  out.start = starts_for(volume, center, w, out.clamped);
  out.values.resize(w * w * w);
  for (std::size_t k = 0; k < w; ++k) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t i = 0; i < w; ++i) {
        out.values[(k * w + j) * w + i] =
            volume.at(static_cast<std::size_t>(out.start[0]) + i,
                      static_cast<std::size_t>(out.start[1]) + j,
                      static_cast<std::size_t>(out.start[2]) + k);
      }
    }
  }
  return out;
}

Image2D extract_mid_slice(const ct::CtVolume& volume, const VoxelIndex& center, std::size_t w,
                          VoxelIndex* start_out, bool* clamped_out) {
  check_window(volume, center, w);
  bool clamped = false;
  const VoxelIndex start = starts_for(volume, center, w, clamped);
  Image2D img;
  img.height = w;
  img.width = w;
  img.pixels.resize(w * w);
  const auto z = static_cast<std::size_t>(center[2]);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < w; ++i) {
      img.pixels[j * w + i] = volume.at(static_cast<std::size_t>(start[0]) + i,
                                        static_cast<std::size_t>(start[1]) + j, z);
    }
  }
  if (start_out) *start_out = start;
  if (clamped_out) *clamped_out = clamped;
  return img;
}

Image3C replicate_channels(const Image2D& image) {
  Image3C out;
  out.height = image.height;
  out.width = image.width;
  out.pixels.reserve(3 * image.pixels.size());
  for (int c = 0; c < 3; ++c) {
    out.pixels.insert(out.pixels.end(), image.pixels.begin(), image.pixels.end());
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    result[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return result;
}

// a + f (b - a), kept inside [min(a,b), max(a,b)].
double lerp_bounded(double a, double b, double f) {
  const double v = a + f * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

}  // namespace

Image2D resize_bilinear(const Image2D& image, std::size_t out_h, std::size_t out_w) {
  if (image.height < 1 || image.width < 1 || out_h < 1 || out_w < 1) {
    fail(ErrorCode::kInvalidArgument, "resize requires non-empty input and output");
  }
  const auto rows = taps(image.height, out_h);
  const auto cols = taps(image.width, out_w);
  Image2D out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(out_h * out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const auto& tr = rows[r];
    for (std::size_t c = 0; c < out_w; ++c) {
      const auto& tc = cols[c];
      const double top = lerp_bounded(image.at(tr.i0, tc.i0), image.at(tr.i0, tc.i1), tc.frac);
      const double bottom = lerp_bounded(image.at(tr.i1, tc.i0), image.at(tr.i1, tc.i1), tc.frac);
      out.pixels[r * out_w + c] = static_cast<float>(lerp_bounded(top, bottom, tr.frac));
    }
  }
  return out;
}

namespace {

double distance_mm(const ct::Vec3& a, const ct::Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

const ct::NoduleAnnotation* nearest_annotation(const std::string& scan_id, const ct::Vec3& p,
                                               const std::vector<ct::NoduleAnnotation>& annotations) {
  const ct::NoduleAnnotation* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& a : annotations) {
    if (a.scan_id != scan_id) continue;
    const double d = distance_mm(a.world_center, p);
    if (d < best_d) {
      best_d = d;
      best = &a;
    }
  }
  return best;
}

}  // namespace

BuildResult build_samples(const ct::CtVolume& volume, const std::string& scan_id,
                          const std::vector<ct::Candidate>& candidates,
                          const std::vector<ct::NoduleAnnotation>& annotations,
                          const SampleOptions& options) {
  ct::validate(options.hu);
  if (!volume.axis_aligned()) {
    fail(ErrorCode::kNonAxisAligned, "scan " + scan_id + " has an oblique direction matrix");
  }
  const std::size_t w = options.window;
  const auto& dims = volume.dims();
  BuildResult result;

  for (const auto& cand : candidates) {
    if (cand.scan_id != scan_id) continue;
    const auto fv = ct::world_to_voxel(volume, cand.world_center);
    const VoxelIndex center = {std::llround(fv[0]), std::llround(fv[1]), std::llround(fv[2])};
    if (center[0] < 0 || center[1] < 0 || center[2] < 0 ||
        center[0] >= static_cast<long long>(dims.nx) || center[1] >= static_cast<long long>(dims.ny) ||
        center[2] >= static_cast<long long>(dims.nz)) {
      logger()->warn("skipping candidate in {}: center ({}, {}, {}) outside volume", scan_id,
                     center[0], center[1], center[2]);
      ++result.skipped;
      continue;
    }

    std::optional<BoxTarget> box;
    if (cand.label == 1) {
      const auto* ann = nearest_annotation(scan_id, cand.world_center, annotations);
      if (ann == nullptr) {
        logger()->warn("skipping positive candidate in {}: no annotation for box size", scan_id);
        ++result.skipped;
        continue;
      }
      box.emplace();
      box->bw = std::clamp(ann->diameter_mm / volume.spacing()[0] / static_cast<double>(w), 0.0, 1.0);
      box->bh = std::clamp(ann->diameter_mm / volume.spacing()[1] / static_cast<double>(w), 0.0, 1.0);
    }

    VoxelIndex start{};
    bool clamped = false;
    Image2D slice = extract_mid_slice(volume, center, w, &start, &clamped);
    for (auto& v : slice.pixels) v = static_cast<float>(ct::normalize_hu(v, options.hu));
    if (box) {
      // A clamped window moves the nodule off the patch center.
      const auto half = static_cast<double>(w / 2);
      box->cx = std::clamp(0.5 + (static_cast<double>(center[0] - start[0]) - half) / static_cast<double>(w), 0.0, 1.0);
      box->cy = std::clamp(0.5 + (static_cast<double>(center[1] - start[1]) - half) / static_cast<double>(w), 0.0, 1.0);
    }

    PatchSample s;
    s.scan_id = scan_id;
    s.center = center;
    s.window = w;
    s.label = cand.label;
    s.bbox = box;
    s.clamped = clamped;
    s.image = replicate_channels(resize_bilinear(slice, options.image_size, options.image_size));
    result.samples.push_back(std::move(s));
  }
  return result;
}

NegativeSelection sample_negatives(const std::vector<ct::Candidate>& candidates,
                                   const std::vector<ct::NoduleAnnotation>& annotations,
                                   double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0)) fail(ErrorCode::kInvalidArgument, "negative ratio must be > 0");
  std::size_t positives = 0;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.label == 1) {
      ++positives;
      continue;
    }
    const bool near_nodule = std::any_of(annotations.begin(), annotations.end(), [&](const auto& a) {
      return a.scan_id == c.scan_id && distance_mm(a.world_center, c.world_center) <= a.diameter_mm;
    });
    if (!near_nodule) eligible.push_back(i);
  }

  NegativeSelection sel;
  sel.requested = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(positives) - 1e-9));
  sel.eligible = eligible.size();
  std::vector<std::size_t> chosen;
  if (eligible.size() <= sel.requested) {
    chosen = eligible;
    sel.insufficient = eligible.size() < sel.requested;
    if (sel.insufficient) {
      logger()->warn("only {} eligible negatives for {} requested", eligible.size(), sel.requested);
    }
  } else {
    Rng rng(seed);
    // Partial Fisher-Yates: the first `requested` slots become the sample.
    for (std::size_t i = 0; i < sel.requested; ++i) {
      const std::size_t j = i + uniform_index(rng, eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
    }
    chosen.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(sel.requested));
    std::sort(chosen.begin(), chosen.end());
  }
  for (std::size_t i : chosen) sel.negatives.push_back(candidates[i]);
  return sel;
}

}  // namespace nodulekit::patch
