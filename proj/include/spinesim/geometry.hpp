#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>

namespace spinesim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Rigid transform mapping local coordinates to world coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 axis_x() const { return rotation.col(0); }
  Vec3 axis_y() const { return rotation.col(1); }
  Vec3 axis_z() const { return rotation.col(2); }

  Pose inverse() const;
  bool is_valid(double tol = 1e-6) const;
};

/// (a * b).apply(p) == a.apply(b.apply(p))
Pose operator*(const Pose& a, const Pose& b);

/// Intrinsic X-Y-Z Euler rotation (degrees): R = Rx(a) * Ry(b) * Rz(c).
Mat3 rotation_xyz_deg(const Vec3& deg);
/// Inverse of rotation_xyz_deg; returns degrees.
Vec3 euler_xyz_deg(const Mat3& r);

/// Rotation angle of R in degrees, in [0, 180].
double rotation_angle_deg(const Mat3& r);
/// Angle between two non-zero vectors in degrees.
double angle_between_deg(const Vec3& a, const Vec3& b);

/// Orthonormal right-handed frame whose third column is `z`. The first axis
/// is chosen perpendicular to `up` when possible.
Mat3 frame_from_z(const Vec3& z, const Vec3& up = Vec3::UnitZ());

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
Mat3 rotation_between(const Vec3& from, const Vec3& to);

/// Default source/detector intrinsics for a C-arm-like imaging chain.
struct CameraConfig {
  double source_to_detector_mm = 1000.0;
  double source_to_target_mm = 700.0;
  std::array<double, 2> detector_size_mm{300.0, 300.0};
  std::array<int, 2> image_px{384, 384};
};

/// Pinhole projective geometry of one radiographic view. Pixel coordinates
/// are continuous: pixel (i, j) covers [i, i+1) x [j, j+1); the detector
/// center maps to (width/2, height/2). Columns run along `axis_u`, rows
/// along `axis_v`.
struct CameraView {
  Vec3 source = Vec3::Zero();
  Vec3 detector_center = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  std::array<double, 2> detector_size_mm{300.0, 300.0};
  std::array<int, 2> image_px{384, 384};
  Vec3 principal = Vec3::UnitZ();
  /// Point the view was centered on; perturbations rotate about it.
  Vec3 isocenter = Vec3::Zero();

  double source_to_detector() const { return (detector_center - source).norm(); }
  /// World position of the center of pixel (i, j) on the detector plane.
  Vec3 pixel_center(int i, int j) const;
  bool is_valid(double tol = 1e-6) const;
};

/// Random view offsets, degrees about the CT axes and centimeters along them.
struct ViewPerturbation {
  Vec3 rotation_deg = Vec3::Zero();
  Vec3 translation_cm = Vec3::Zero();

  static constexpr double kMaxRotationDeg = 5.0;
  static constexpr double kMaxTranslationCm = 2.5;

  bool within_bounds() const;
};

/// Generic constructor: principal direction `dir`, centered on `target`.
CameraView make_view(const Vec3& dir, const Vec3& target, const CameraConfig& config,
                     const Vec3& up = Vec3::UnitZ());
/// AP view along the normalized mean of the two pedicle axes.
CameraView make_ap_view(const Vec3& left_axis, const Vec3& right_axis, const Vec3& target,
                        const CameraConfig& config);
/// Lateral view looking along the patient-right direction.
CameraView make_lateral_view(const Vec3& patient_right, const Vec3& target,
                             const CameraConfig& config);
CameraView perturb_view(const CameraView& view, const ViewPerturbation& p);

/// Continuous pixel coordinates of the perspective projection of `p`.
Eigen::Vector2d project_point(const CameraView& view, const Vec3& p);

}  // namespace spinesim
