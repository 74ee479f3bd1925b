#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace nodulekit::ct {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3. Column j is the world direction of voxel axis j.
using Mat3 = std::array<double, 9>;

inline constexpr Mat3 kIdentity = {1, 0, 0, 0, 1, 0, 0, 0, 1};

enum class ElementType { kShort, kFloat };

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const noexcept { return nx * ny * nz; }
  bool operator==(const Dims&) const = default;
};

/// Voxel grid in Hounsfield units, x-fastest ordering. Immutable once built;
/// the constructor enforces the geometry invariants.
class CtVolume {
 public:
  CtVolume(Dims dims, Vec3 spacing, Vec3 origin, Mat3 direction, std::vector<float> voxels,
           ElementType stored_as = ElementType::kFloat);

  const Dims& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Vec3& origin() const noexcept { return origin_; }
  const Mat3& direction() const noexcept { return direction_; }
  const std::vector<float>& voxels() const noexcept { return voxels_; }
  ElementType stored_as() const noexcept { return stored_as_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return (z * dims_.ny + y) * dims_.nx + x;
  }

  /// Unchecked access; see patch::voxel_at for the bounds-checked form.
  float at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return voxels_[index(x, y, z)];
  }

  /// True when every direction column is a signed unit axis.
  bool axis_aligned() const noexcept;

 private:
  Dims dims_;
  Vec3 spacing_;
  Vec3 origin_;
  Mat3 direction_;
  std::vector<float> voxels_;
  ElementType stored_as_;
};

/// Continuous voxel coordinate of a world point (mm).
Vec3 world_to_voxel(const CtVolume& volume, const Vec3& point_mm);
Vec3 voxel_to_world(const CtVolume& volume, const Vec3& voxel);

struct HuWindow {
  double lo = -1000.0;
  double hi = 400.0;
};

void validate(const HuWindow& window);

/// (clip(v, lo, hi) - lo) / (hi - lo).
double normalize_hu(double value, const HuWindow& window);

/// Copy of `volume` with every voxel mapped into [0, 1].
CtVolume normalize_hu(const CtVolume& volume, const HuWindow& window);

}  // namespace nodulekit::ct
