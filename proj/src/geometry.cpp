#include "spinesim/geometry.hpp"

#include "spinesim/error.hpp"

#include <algorithm>
#include <cmath>

namespace spinesim {

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

bool Pose::is_valid(double tol) const {
  const Mat3 should_be_identity = rotation.transpose() * rotation;
  return (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
}

Pose operator*(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Mat3 rotation_xyz_deg(const Vec3& deg) {
  const Eigen::AngleAxisd rx(deg_to_rad(deg.x()), Vec3::UnitX());
  const Eigen::AngleAxisd ry(deg_to_rad(deg.y()), Vec3::UnitY());
  const Eigen::AngleAxisd rz(deg_to_rad(deg.z()), Vec3::UnitZ());
  return (rx * ry * rz).toRotationMatrix();
}

Vec3 euler_xyz_deg(const Mat3& r) {
  // R = Rx(a) Ry(b) Rz(c): R(0,2) = sin b, R(1,2) = -sin a cos b, R(0,1) = -cos b sin c.
  const double b = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
  double a, c;
  if (std::abs(r(0, 2)) < 1.0 - 1e-12) {
    a = std::atan2(-r(1, 2), r(2, 2));
    c = std::atan2(-r(0, 1), r(0, 0));
  } else {
    // Gimbal lock: fold everything into a.
    a = std::atan2(r(2, 1), r(1, 1));
    c = 0.0;
  }
  return {rad_to_deg(a), rad_to_deg(b), rad_to_deg(c)};
}

double rotation_angle_deg(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

double angle_between_deg(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return rad_to_deg(std::acos(c));
}

Mat3 frame_from_z(const Vec3& z_in, const Vec3& up) {
  const Vec3 z = z_in.normalized();
  Vec3 helper = up;
  if (std::abs(helper.normalized().dot(z)) > 0.99) {
    helper = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  }
  const Vec3 x = helper.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  return Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
}

Vec3 CameraView::pixel_center(int i, int j) const {
  const double fu = (i + 0.5) / image_px[0] - 0.5;
  const double fv = (j + 0.5) / image_px[1] - 0.5;
  return detector_center + fu * detector_size_mm[0] * axis_u + fv * detector_size_mm[1] * axis_v;
}

bool CameraView::is_valid(double tol) const {
  return std::abs(axis_u.norm() - 1.0) <= tol && std::abs(axis_v.norm() - 1.0) <= tol &&
         std::abs(principal.norm() - 1.0) <= tol && std::abs(axis_u.dot(axis_v)) <= tol &&
         std::abs(axis_u.dot(principal)) <= tol && std::abs(axis_v.dot(principal)) <= tol &&
         source_to_detector() > 0.0 && image_px[0] > 0 && image_px[1] > 0 &&
         detector_size_mm[0] > 0.0 && detector_size_mm[1] > 0.0;
}

bool ViewPerturbation::within_bounds() const {
  return rotation_deg.allFinite() && translation_cm.allFinite() &&
         rotation_deg.cwiseAbs().maxCoeff() <= kMaxRotationDeg &&
         translation_cm.cwiseAbs().maxCoeff() <= kMaxTranslationCm;
}

CameraView make_view(const Vec3& dir, const Vec3& target, const CameraConfig& config,
                     const Vec3& up) {
  if (!(dir.norm() > 1e-9) || !dir.allFinite()) {
    contract_error("degenerate_direction", "view direction has zero length");
  }
  if (!(config.source_to_detector_mm > 0.0) || !(config.source_to_target_mm > 0.0) ||
      config.image_px[0] <= 0 || config.image_px[1] <= 0 || !(config.detector_size_mm[0] > 0.0) ||
      !(config.detector_size_mm[1] > 0.0)) {
    contract_error("invalid_camera_config", "camera config values must be positive");
  }
  const Vec3 d = dir.normalized();
  Vec3 v_up = up - up.dot(d) * d;
  if (v_up.norm() < 1e-6) {
    const Vec3 alt = std::abs(d.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    v_up = alt - alt.dot(d) * d;
  }
  v_up.normalize();

  CameraView view;
  view.principal = d;
  view.isocenter = target;
  view.source = target - config.source_to_target_mm * d;
  view.detector_center = view.source + config.source_to_detector_mm * d;
  view.axis_v = -v_up;  // rows run from superior to inferior
  view.axis_u = view.axis_v.cross(d);
  view.detector_size_mm = config.detector_size_mm;
  view.image_px = config.image_px;
  return view;
}

CameraView make_ap_view(const Vec3& left_axis, const Vec3& right_axis, const Vec3& target,
                        const CameraConfig& config) {
  const Vec3 mean = 0.5 * (left_axis + right_axis);
  if (mean.norm() < 1e-9) {
    contract_error("antiparallel_axes", "pedicle axes are anti-parallel; AP direction undefined");
  }
  return make_view(mean, target, config);
}

CameraView make_lateral_view(const Vec3& patient_right, const Vec3& target,
                             const CameraConfig& config) {
  return make_view(patient_right, target, config);
}

CameraView perturb_view(const CameraView& view, const ViewPerturbation& p) {
  if (!p.within_bounds()) {
    contract_error("perturbation_out_of_bounds",
                   "view perturbation exceeds +/-5 deg or +/-2.5 cm");
  }
  if (p.rotation_deg.isZero(0.0) && p.translation_cm.isZero(0.0)) return view;
  const Mat3 r = rotation_xyz_deg(p.rotation_deg);
  const Vec3 shift = 10.0 * p.translation_cm;
  const auto move = [&](const Vec3& q) -> Vec3 {
    return view.isocenter + r * (q - view.isocenter) + shift;
  };
  CameraView out = view;
  out.source = move(view.source);
  out.detector_center = move(view.detector_center);
  out.axis_u = r * view.axis_u;
  out.axis_v = r * view.axis_v;
  out.principal = r * view.principal;
  out.isocenter = view.isocenter + shift;
  return out;
}

Eigen::Vector2d project_point(const CameraView& view, const Vec3& p) {
  const Vec3 rel = p - view.source;
  const double depth = rel.dot(view.principal);
  if (!(depth > 1e-9)) {
    contract_error("behind_source", "point lies at or behind the source plane");
  }
  const double sdd = (view.detector_center - view.source).dot(view.principal);
  const Vec3 hit = view.source + rel * (sdd / depth);
  const Vec3 off = hit - view.detector_center;
  const double col = (off.dot(view.axis_u) / view.detector_size_mm[0] + 0.5) * view.image_px[0];
  const double row = (off.dot(view.axis_v) / view.detector_size_mm[1] + 0.5) * view.image_px[1];
  return {col, row};
}

}  // namespace spinesim
