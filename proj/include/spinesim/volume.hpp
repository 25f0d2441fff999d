#pragma once

#include "spinesim/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace spinesim {

/// Gridded attenuation (1/mm) and label data. Voxel (i, j, k) has its center
/// at origin + (i, j, k) * spacing; storage is x-fastest.
class VoxelVolume {
 public:
  VoxelVolume() = default;
  VoxelVolume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin);
  VoxelVolume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, std::vector<float> values,
              std::vector<std::uint8_t> labels);

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  float value(int i, int j, int k) const { return values_[index(i, j, k)]; }
  float& value(int i, int j, int k) { return values_[index(i, j, k)]; }
  std::uint8_t label(int i, int j, int k) const { return labels_[index(i, j, k)]; }
  std::uint8_t& label(int i, int j, int k) { return labels_[index(i, j, k)]; }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  std::vector<std::uint8_t>& labels() { return labels_; }

  Vec3 voxel_center(int i, int j, int k) const;
  /// Continuous voxel index of a world point.
  Vec3 to_index(const Vec3& world) const;
  /// Axis-aligned world bounds of the voxel cells (centers +/- half spacing).
  Vec3 lower_bound() const { return origin_ - 0.5 * spacing_; }
  Vec3 upper_bound() const;

  /// Trilinear interpolation; voxels outside the grid count as zero.
  double sample(const Vec3& world) const;

  /// Checks the type invariants; throws Error on violation.
  void validate() const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  std::vector<float> values_;
  std::vector<std::uint8_t> labels_;
};

struct Material {
  std::string name;
  double density_g_cm3 = 0.0;
  double mu_over_rho_cm2_g = 0.0;

  /// Linear attenuation in 1/mm.
  double attenuation_per_mm() const { return density_g_cm3 * mu_over_rho_cm2_g * 0.1; }
};

/// Label id -> material. Label 0 is background and always attenuates zero.
struct MaterialTable {
  std::map<int, Material> entries;

  void validate() const;
};

VoxelVolume load_volume(const std::filesystem::path& header);
/// Writes `<stem>.json` header plus `<stem>.raw` (and `<stem>.labels.raw`).
void write_volume(const VoxelVolume& v, const std::filesystem::path& header);

MaterialTable load_material_table(const std::filesystem::path& path);
void write_material_table(const MaterialTable& t, const std::filesystem::path& path);

/// Upsamples by an integer factor (trilinear values, nearest labels), then
/// Gaussian-smooths the values with `sigma_mm`.
VoxelVolume resample_volume(const VoxelVolume& v, int factor, double sigma_mm);

/// Separable Gaussian smoothing with reflecting boundaries.
VoxelVolume gaussian_smooth(const VoxelVolume& v, double sigma_mm);

/// Replaces values with the attenuation of each voxel's material.
VoxelVolume apply_materials(const VoxelVolume& v, const MaterialTable& t);

}  // namespace spinesim
