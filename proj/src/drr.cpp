#include "spinesim/drr.hpp"

#include "parallel.hpp"
#include "spinesim/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spinesim {

void CannulaModel::validate() const {
  if (!(length_mm > 0.0) || !(radius_mm > 0.0) || !(attenuation_per_mm >= 0.0)) {
    contract_error("invalid_cannula", "cannula needs length > 0, radius > 0, attenuation >= 0");
  }
}

namespace {

/// Clips the parametric segment from + s*dir, s in [s0, s1], to an axis-aligned box.
bool clip_to_box(const Vec3& from, const Vec3& dir, const Vec3& lo, const Vec3& hi, double& s0,
                 double& s1) {
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (from[a] < lo[a] || from[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - from[a]) / dir[a];
    double tb = (hi[a] - from[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    s0 = std::max(s0, ta);
    s1 = std::min(s1, tb);
    if (s0 >= s1) return false;
  }
  return true;
}

}  // namespace

double ray_line_integral(const VoxelVolume& v, const Vec3& from, const Vec3& to, double step_mm) {
  if (v.empty()) return 0.0;
  const Vec3 seg = to - from;
  const double len = seg.norm();
  if (len <= 0.0) return 0.0;
  const Vec3 dir = seg / len;
  // Trilinear support extends one full voxel beyond the outermost centers.
  const Vec3 lo = v.origin() - v.spacing();
  const Vec3 hi = v.origin() + Vec3(v.dims()[0], v.dims()[1], v.dims()[2]).cwiseProduct(v.spacing());
  double s0 = 0.0, s1 = len;
  if (!clip_to_box(from, dir, lo, hi, s0, s1)) return 0.0;
  const double span = s1 - s0;
  const int n = std::max(1, static_cast<int>(std::ceil(span / step_mm)));
  const double h = span / n;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += v.sample(from + (s0 + (k + 0.5) * h) * dir);
  return acc * h;
}

double cannula_chord(const CannulaModel& c, const Vec3& from, const Vec3& to) {
  const Vec3 seg = to - from;
  const double len = seg.norm();
  if (len <= 0.0) return 0.0;
  const Vec3 w = seg / len;
  const Vec3 z = c.pose.axis_z();
  const Vec3 o = from - c.hub();

  double lo = 0.0, hi = len;
  // Radial constraint |perp(o + s w)|^2 <= r^2.
  const Vec3 op = o - o.dot(z) * z;
  const Vec3 wp = w - w.dot(z) * z;
  const double a = wp.squaredNorm();
  const double b = op.dot(wp);
  const double cc = op.squaredNorm() - c.radius_mm * c.radius_mm;
  if (a < 1e-15) {
    if (cc > 0.0) return 0.0;
  } else {
    const double disc = b * b - a * cc;
    if (disc <= 0.0) return 0.0;
    const double sq = std::sqrt(disc);
    lo = std::max(lo, (-b - sq) / a);
    hi = std::min(hi, (-b + sq) / a);
  }
  // Axial constraint 0 <= (o + s w).z <= length.
  const double oz = o.dot(z);
  const double wz = w.dot(z);
  if (std::abs(wz) < 1e-15) {
    if (oz < 0.0 || oz > c.length_mm) return 0.0;
  } else {
    double ta = -oz / wz;
    double tb = (c.length_mm - oz) / wz;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  return std::max(0.0, hi - lo);
}

void window_image(RadiographImage& img) {
  constexpr double kLogEps = -27.631021115928547;  // log(1e-12)
  img.pixels.assign(img.line_integral.size(), 0.0);
  if (img.line_integral.empty()) return;
  const auto [mn, mx] = std::minmax_element(img.line_integral.begin(), img.line_integral.end());
  const double log_i_max = -*mn;
  const double log_i_min = std::max(-*mx, kLogEps);
  const double denom = log_i_max - log_i_min;
  if (!(denom > 1e-15)) return;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double log_i = std::max(-img.line_integral[i], kLogEps);
    img.pixels[i] = std::clamp((log_i_max - log_i) / denom, 0.0, 1.0);
  }
}

RadiographImage render(const VoxelVolume& v, const CameraView& view,
                       const std::optional<CannulaModel>& cannula, ViewTag tag,
                       const RenderOptions& options) {
  if (!view.is_valid()) contract_error("invalid_view", "camera view is not valid");
  if (cannula) cannula->validate();
  RadiographImage img;
  img.width = view.image_px[0];
  img.height = view.image_px[1];
  img.view = tag;
  img.line_integral.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);
  const double step = options.step_fraction * (v.empty() ? 1.0 : v.spacing().minCoeff());

  detail::parallel_for(img.height, [&](int j) {
    for (int i = 0; i < img.width; ++i) {
      const Vec3 px = view.pixel_center(i, j);
      double total = ray_line_integral(v, view.source, px, step);
      if (cannula && cannula->attenuation_per_mm > 0.0) {
        total += cannula->attenuation_per_mm * cannula_chord(*cannula, view.source, px);
      }
      img.line_integral[static_cast<std::size_t>(j) * img.width + i] = total;
    }
  });
  window_image(img);
  return img;
}

PixelRect crop_rect_for(const CameraView& view, const Vec3& centroid, std::array<int, 2> crop_px) {
  const int w = view.image_px[0], h = view.image_px[1];
  if (crop_px[0] <= 0 || crop_px[1] <= 0 || crop_px[0] > w || crop_px[1] > h) {
    contract_error("invalid_crop", "crop size must be positive and fit inside the image");
  }
  const Eigen::Vector2d c = project_point(view, centroid);
  if (!(c.x() >= 0.0 && c.x() <= w && c.y() >= 0.0 && c.y() <= h)) {
    contract_error("centroid_outside_image", "target centroid projects outside the image");
  }
  PixelRect r;
  r.width = crop_px[0];
  r.height = crop_px[1];
  r.x = std::clamp(static_cast<int>(std::lround(c.x() - 0.5 * crop_px[0])), 0, w - crop_px[0]);
  r.y = std::clamp(static_cast<int>(std::lround(c.y() - 0.5 * crop_px[1])), 0, h - crop_px[1]);
  return r;
}

RadiographImage crop_image(const RadiographImage& full, const PixelRect& rect) {
  if (rect.x < 0 || rect.y < 0 || rect.width <= 0 || rect.height <= 0 ||
      rect.x + rect.width > full.width || rect.y + rect.height > full.height) {
    contract_error("invalid_crop", "crop rectangle outside the parent image");
  }
  RadiographImage out;
  out.width = rect.width;
  out.height = rect.height;
  out.view = full.view;
  out.cropped = true;
  out.crop_rect = rect;
  const bool have_raw = !full.line_integral.empty();
  auto& dst = have_raw ? out.line_integral : out.pixels;
  const auto& src = have_raw ? full.line_integral : full.pixels;
  dst.resize(static_cast<std::size_t>(rect.width) * rect.height);
  for (int j = 0; j < rect.height; ++j) {
    for (int i = 0; i < rect.width; ++i) {
      dst[static_cast<std::size_t>(j) * rect.width + i] =
          src[static_cast<std::size_t>(rect.y + j) * full.width + rect.x + i];
    }
  }
  if (have_raw) window_image(out);
  return out;
}

RadiographImage render_crop(const VoxelVolume& v, const CameraView& view,
                            const std::optional<CannulaModel>& cannula, const Vec3& centroid,
                            std::array<int, 2> crop_px, ViewTag tag, const RenderOptions& options) {
  const PixelRect rect = crop_rect_for(view, centroid, crop_px);
  return crop_image(render(v, view, cannula, tag, options), rect);
}

std::string_view slot_name(ObservationSlot s) {
  switch (s) {
    case ObservationSlot::ApFull: return "ap";
    case ObservationSlot::LateralFull: return "lat";
    case ObservationSlot::ApCrop: return "ap_crop";
    case ObservationSlot::LateralCrop: return "lat_crop";
  }
  return "?";
}

std::size_t ObservationSet::count() const {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const auto& i) { return i.has_value(); }));
}

ObservationSet observation_set(const ImagingContext& ctx, const std::optional<CannulaModel>& cannula,
                               const ObservationConfig& config) {
  ObservationSet out;
  const auto emit = [&](const CameraView& view, ViewTag tag, ObservationSlot full_slot,
                        ObservationSlot crop_slot) {
    RadiographImage full = render(*ctx.volume, view, cannula, tag, ctx.options);
    if (config.crops) {
      out.images[static_cast<int>(crop_slot)] =
          crop_image(full, crop_rect_for(view, ctx.target_centroid, config.crop_px));
    }
    out.images[static_cast<int>(full_slot)] = std::move(full);
  };
  if (config.ap) emit(ctx.ap_view, ViewTag::AP, ObservationSlot::ApFull, ObservationSlot::ApCrop);
  if (config.lateral) {
    emit(ctx.lateral_view, ViewTag::Lateral, ObservationSlot::LateralFull, ObservationSlot::LateralCrop);
  }
  return out;
}

RadiographImage blend_real(const RadiographImage& real, const CameraView& view,
                           const CannulaModel& cannula) {
  cannula.validate();
  if (real.width != view.image_px[0] || real.height != view.image_px[1]) {
    contract_error("size_mismatch", "real image size differs from the view's image size");
  }
  RadiographImage out = real;
  out.line_integral.clear();
  if (cannula.attenuation_per_mm == 0.0) return out;
  detail::parallel_for(real.height, [&](int j) {
    for (int i = 0; i < real.width; ++i) {
      const double chord = cannula_chord(cannula, view.source, view.pixel_center(i, j));
      if (chord > 0.0) out.at(i, j) = real.at(i, j) * std::exp(-cannula.attenuation_per_mm * chord);
    }
  });
  return out;
}

}  // namespace spinesim
