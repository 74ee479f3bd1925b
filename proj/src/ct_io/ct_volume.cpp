#include "ct_io/ct_volume.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace nodulekit::ct {

namespace {

double column_dot(const Mat3& m, int a, int b) {
  return m[0 * 3 + a] * m[0 * 3 + b] + m[1 * 3 + a] * m[1 * 3 + b] + m[2 * 3 + a] * m[2 * 3 + b];
}

}  // namespace

CtVolume::CtVolume(Dims dims, Vec3 spacing, Vec3 origin, Mat3 direction, std::vector<float> voxels,
                   ElementType stored_as)
    : dims_(dims),
      spacing_(spacing),
      origin_(origin),
      direction_(direction),
      voxels_(std::move(voxels)),
      stored_as_(stored_as) {
  if (dims_.nx < 1 || dims_.ny < 1 || dims_.nz < 1) {
    fail(ErrorCode::kInvalidGeometry, "volume dimensions must all be >= 1");
  }
  for (double s : spacing_) {
    if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorCode::kInvalidGeometry, "spacing must be > 0");
  }
  if (voxels_.size() != dims_.count()) {
    fail(ErrorCode::kPayloadSizeMismatch,
         "voxel count " + std::to_string(voxels_.size()) + " != nx*ny*nz = " +
             std::to_string(dims_.count()));
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const double expected = a == b ? 1.0 : 0.0;
      if (std::abs(column_dot(direction_, a, b) - expected) > 1e-6) {
        fail(ErrorCode::kInvalidGeometry, "direction matrix is not orthonormal");
      }
    }
  }
}

bool CtVolume::axis_aligned() const noexcept {
  for (int col = 0; col < 3; ++col) {
    int nonzero = 0;
    for (int row = 0; row < 3; ++row) {
      const double v = direction_[row * 3 + col];
      if (std::abs(v) > 1e-6) {
        if (std::abs(std::abs(v) - 1.0) > 1e-6) return false;
        ++nonzero;
      }
    }
    if (nonzero != 1) return false;
  }
  return true;
}

Vec3 world_to_voxel(const CtVolume& volume, const Vec3& point_mm) {
  const auto& d = volume.direction();
  const auto& o = volume.origin();
  const auto& s = volume.spacing();
  const Vec3 rel = {point_mm[0] - o[0], point_mm[1] - o[1], point_mm[2] - o[2]};
  Vec3 out{};
  for (int j = 0; j < 3; ++j) {
    // (D^T rel)_j = sum_i D[i][j] rel_i
    const double projected = d[0 * 3 + j] * rel[0] + d[1 * 3 + j] * rel[1] + d[2 * 3 + j] * rel[2];
    out[j] = projected / s[j];
  }
  return out;
}

Vec3 voxel_to_world(const CtVolume& volume, const Vec3& voxel) {
  const auto& d = volume.direction();
  const auto& o = volume.origin();
  const auto& s = volume.spacing();
  const Vec3 scaled = {voxel[0] * s[0], voxel[1] * s[1], voxel[2] * s[2]};
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = o[i] + d[i * 3 + 0] * scaled[0] + d[i * 3 + 1] * scaled[1] + d[i * 3 + 2] * scaled[2];
  }
  return out;
}

void validate(const HuWindow& window) {
  if (!(window.lo < window.hi)) {
    fail(ErrorCode::kDegenerateWindow, "HU window requires lo < hi (got " +
                                           std::to_string(window.lo) + ", " +
                                           std::to_string(window.hi) + ")");
  }
}

double normalize_hu(double value, const HuWindow& window) {
  validate(window);
  const double clipped = std::clamp(value, window.lo, window.hi);
  return (clipped - window.lo) / (window.hi - window.lo);
}

CtVolume normalize_hu(const CtVolume& volume, const HuWindow& window) {
  validate(window);
  std::vector<float> out(volume.voxels().size());
  std::transform(volume.voxels().begin(), volume.voxels().end(), out.begin(),
                 [&](float v) { return static_cast<float>(normalize_hu(v, window)); });
  return CtVolume(volume.dims(), volume.spacing(), volume.origin(), volume.direction(),
                  std::move(out), ElementType::kFloat);
}

}  // namespace nodulekit::ct
