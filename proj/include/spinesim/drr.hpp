#pragma once

#include "spinesim/geometry.hpp"
#include "spinesim/volume.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace spinesim {

enum class ViewTag { AP, Lateral };

struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool operator==(const PixelRect&) const = default;
};

/// Post-processed radiograph. `pixels` are display values in [0, 1], row-major.
/// `line_integral` holds the total attenuation per pixel when the image was
/// rendered (empty for real or blended images).
struct RadiographImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;
  std::vector<double> line_integral;
  ViewTag view = ViewTag::AP;
  bool cropped = false;
  PixelRect crop_rect;

  double at(int i, int j) const { return pixels[static_cast<std::size_t>(j) * width + i]; }
  double& at(int i, int j) { return pixels[static_cast<std::size_t>(j) * width + i]; }
};

/// Rigid cannula. `pose` is the tip frame; local +z is the insertion
/// direction and the shaft extends from the tip back along -z.
struct CannulaModel {
  static constexpr double kDefaultLengthMm = 140.0;

  Pose pose;
  double length_mm = kDefaultLengthMm;
  double radius_mm = 1.0;
  double attenuation_per_mm = 2.0;

  Vec3 tip() const { return pose.translation; }
  Vec3 hub() const { return pose.translation - length_mm * pose.axis_z(); }
  void validate() const;
};

struct RenderOptions {
  /// Ray sampling step as a fraction of the smallest voxel spacing.
  double step_fraction = 0.5;
};

/// Midpoint-rule line integral of the volume's attenuation along [from, to],
/// clipped to the support of the trilinear interpolant.
double ray_line_integral(const VoxelVolume& v, const Vec3& from, const Vec3& to, double step_mm);

/// Length (mm) of the part of segment [from, to] inside the capped cannula cylinder.
double cannula_chord(const CannulaModel& c, const Vec3& from, const Vec3& to);

/// Maps line integrals to display values by auto-windowed negative log.
void window_image(RadiographImage& img);

RadiographImage render(const VoxelVolume& v, const CameraView& view,
                       const std::optional<CannulaModel>& cannula, ViewTag tag = ViewTag::AP,
                       const RenderOptions& options = {});

/// Crop rectangle of size `crop_px` centered on the projection of `centroid`,
/// clamped to the image bounds.
PixelRect crop_rect_for(const CameraView& view, const Vec3& centroid, std::array<int, 2> crop_px);

/// Extracts `rect` from a rendered image and re-windows it.
RadiographImage crop_image(const RadiographImage& full, const PixelRect& rect);

RadiographImage render_crop(const VoxelVolume& v, const CameraView& view,
                            const std::optional<CannulaModel>& cannula, const Vec3& centroid,
                            std::array<int, 2> crop_px, ViewTag tag = ViewTag::AP,
                            const RenderOptions& options = {});

/// Which of the four observation images are produced.
struct ObservationConfig {
  bool ap = true;
  bool lateral = true;
  bool crops = true;
  std::array<int, 2> crop_px{128, 128};

  static ObservationConfig full() { return {}; }
  static ObservationConfig no_crop() { return {true, true, false}; }
  static ObservationConfig ap_only() { return {true, false, true}; }
  static ObservationConfig lateral_only() { return {false, true, true}; }
};

enum class ObservationSlot { ApFull = 0, LateralFull = 1, ApCrop = 2, LateralCrop = 3 };
std::string_view slot_name(ObservationSlot s);

/// [AP full, lateral full, AP crop, lateral crop]; disabled slots are empty.
struct ObservationSet {
  std::array<std::optional<RadiographImage>, 4> images;

  const std::optional<RadiographImage>& operator[](ObservationSlot s) const {
    return images[static_cast<int>(s)];
  }
  std::size_t count() const;
};

/// Everything needed to image one scene state.
struct ImagingContext {
  const VoxelVolume* volume = nullptr;
  CameraView ap_view;
  CameraView lateral_view;
  Vec3 target_centroid = Vec3::Zero();
  RenderOptions options;
};

ObservationSet observation_set(const ImagingContext& ctx, const std::optional<CannulaModel>& cannula,
                               const ObservationConfig& config);

/// Multiplies a real radiograph by the cannula's transmission along each pixel ray.
RadiographImage blend_real(const RadiographImage& real, const CameraView& view,
                           const CannulaModel& cannula);

}  // namespace spinesim
