#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinesim/drr.hpp"
#include "spinesim/error.hpp"
#include "spinesim/phantom.hpp"
#include "spinesim/rng.hpp"

#include <cmath>

using namespace spinesim;

namespace {

CameraConfig config(int px) {
  CameraConfig c;
  c.image_px = {px, px};
  return c;
}

VoxelVolume box_volume() {
  PhantomSpec s;
  s.kind = PhantomKind::Box;
  s.box_size_mm = {100, 100, 100};
  s.attenuation_per_mm = 0.02;
  return build_phantom(s).volume;
}

// Cannula lying along +x through `center`, tip on the +x side.
CannulaModel cannula_along_x(const Vec3& center, double mu, double radius = 1.0, double length = 140.0) {
  CannulaModel c;
  c.pose.rotation = frame_from_z(Vec3::UnitX());
  c.pose.translation = center + 0.5 * length * Vec3::UnitX();
  c.length_mm = length;
  c.radius_mm = radius;
  c.attenuation_per_mm = mu;
  return c;
}

RadiographImage white(int w, int h) {
  RadiographImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<std::size_t>(w) * h, 1.0);
  return img;
}

}  // namespace

TEST_CASE("vacuum image maps every pixel to zero attenuation") {
  const VoxelVolume empty({4, 4, 4}, Vec3::Ones(), Vec3::Zero());
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(16));
  const RadiographImage img = render(empty, v, std::nullopt);
  for (double x : img.line_integral) CHECK(x == 0.0);
  for (double x : img.pixels) CHECK(x == 0.0);
}

TEST_CASE("box central ray integral is 2.0") {
  const VoxelVolume box = box_volume();
  // Direct ray straight through the center.
  const double direct = ray_line_integral(box, Vec3(0, -500, 0), Vec3(0, 500, 0), 1.0);
  CHECK(direct == doctest::Approx(2.0).epsilon(0.01));
  // Through the renderer: odd image so the central pixel ray is the principal ray.
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(33));
  const RadiographImage img = render(box, v, std::nullopt);
  const double central = img.line_integral[16 * 33 + 16];
  CHECK(central == doctest::Approx(2.0).epsilon(0.01));
  CHECK(std::exp(-central) == doctest::Approx(std::exp(-2.0)).epsilon(0.01));

  RenderOptions half;
  half.step_fraction = 0.25;
  const double refined = render(box, v, std::nullopt, ViewTag::AP, half).line_integral[16 * 33 + 16];
  CHECK(std::abs(refined - central) / central < 0.005);
}

TEST_CASE("cannula chord oracles") {
  const CannulaModel c = cannula_along_x(Vec3::Zero(), 0.5);
  // Perpendicular through the axis: chord equals the diameter.
  CHECK(cannula_chord(c, Vec3(0, -100, 0), Vec3(0, 100, 0)) == doctest::Approx(2.0).epsilon(1e-12));
  // Offset by d from the axis: 2 sqrt(r^2 - d^2).
  CHECK(cannula_chord(c, Vec3(0, -100, 0.6), Vec3(0, 100, 0.6)) == doctest::Approx(1.6).epsilon(1e-12));
  // Along the axis: the full length.
  CHECK(cannula_chord(c, Vec3(-500, 0, 0), Vec3(500, 0, 0)) == doctest::Approx(140.0).epsilon(1e-12));
  // Past the hub and tip caps: nothing.
  CHECK(cannula_chord(c, Vec3(80, -100, 0), Vec3(80, 100, 0)) == 0.0);
  CHECK(cannula_chord(c, Vec3(0, -100, 2), Vec3(0, 100, 2)) == 0.0);
  // Segment stopping short of the cannula.
  CHECK(cannula_chord(c, Vec3(0, -100, 0), Vec3(0, -50, 0)) == 0.0);

  // Rendered into vacuum: the central pixel gains mu * diameter = 1.0.
  const VoxelVolume empty({2, 2, 2}, Vec3::Ones(), Vec3(500, 500, 500));
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(33));
  const RadiographImage img = render(empty, v, c);
  CHECK(img.line_integral[16 * 33 + 16] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("crop rectangles") {
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(384));
  const PixelRect r = crop_rect_for(v, Vec3::Zero(), {128, 128});
  CHECK(r == PixelRect{128, 128, 128, 128});
  CHECK(r.x + r.width / 2 == 192);

  // Near the corner: clamped inside the image.
  const Vec3 corner = v.isocenter + 0.9 * (-100.0 * v.axis_u - 100.0 * v.axis_v);
  const Eigen::Vector2d pc = project_point(v, corner);
  REQUIRE(pc.x() < 64.0);
  REQUIRE(pc.y() < 64.0);
  CHECK(crop_rect_for(v, corner, {128, 128}) == PixelRect{0, 0, 128, 128});

  CHECK_THROWS_AS(crop_rect_for(v, Vec3::Zero(), {400, 10}), Error);
  CHECK_THROWS_AS(crop_rect_for(v, Vec3(1000, 0, 0), {16, 16}), Error);
}

TEST_CASE("crop of a constant image is constant; crop keeps raw integrals") {
  RadiographImage flat = white(20, 10);
  flat.line_integral.assign(200, 0.7);
  window_image(flat);
  const RadiographImage c = crop_image(flat, {3, 2, 8, 5});
  CHECK(c.width == 8);
  CHECK(c.height == 5);
  for (double x : c.pixels) CHECK(x == c.pixels.front());
  for (double x : c.line_integral) CHECK(x == 0.7);

  const VoxelVolume box = box_volume();
  const CameraView v = make_view(Vec3(0.3, 1, 0.1), Vec3::Zero(), config(40));
  const RadiographImage full = render(box, v, std::nullopt);
  const RadiographImage crop = render_crop(box, v, std::nullopt, Vec3::Zero(), {12, 12});
  REQUIRE(crop.cropped);
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) {
      CHECK(crop.line_integral[j * 12 + i] ==
            full.line_integral[(j + crop.crop_rect.y) * 40 + i + crop.crop_rect.x]);
    }
  CHECK_THROWS_AS(crop_image(flat, {15, 0, 8, 5}), Error);
}

TEST_CASE("observation configurations") {
  const VoxelVolume box = box_volume();
  ImagingContext ctx;
  ctx.volume = &box;
  ctx.ap_view = make_view(Vec3::UnitY(), Vec3::Zero(), config(24));
  ctx.lateral_view = make_lateral_view(Vec3::UnitX(), Vec3::Zero(), config(24));
  ObservationConfig full;
  full.crop_px = {8, 8};

  const ObservationSet all = observation_set(ctx, std::nullopt, full);
  CHECK(all.count() == 4);
  CHECK(all[ObservationSlot::ApCrop]->width == 8);
  CHECK(all[ObservationSlot::LateralFull]->view == ViewTag::Lateral);

  ObservationConfig nc = ObservationConfig::no_crop();
  nc.crop_px = {8, 8};
  const ObservationSet two = observation_set(ctx, std::nullopt, nc);
  CHECK(two.count() == 2);
  CHECK(two[ObservationSlot::ApFull].has_value());
  CHECK(two[ObservationSlot::LateralFull].has_value());
  CHECK_FALSE(two[ObservationSlot::ApCrop].has_value());

  ObservationConfig ap = ObservationConfig::ap_only();
  ap.crop_px = {8, 8};
  const ObservationSet aps = observation_set(ctx, std::nullopt, ap);
  CHECK(aps.count() == 2);
  CHECK(aps[ObservationSlot::ApFull].has_value());
  CHECK(aps[ObservationSlot::ApCrop].has_value());
  CHECK_FALSE(aps[ObservationSlot::LateralFull].has_value());
  CHECK_FALSE(aps[ObservationSlot::LateralCrop].has_value());

  CHECK(slot_name(ObservationSlot::LateralCrop) == "lat_crop");
}

TEST_CASE("render is deterministic and monotone in attenuation") {
  Rng rng(9);
  VoxelVolume v({10, 10, 10}, Vec3(3, 3, 3), Vec3(-13.5, -13.5, -13.5));
  for (auto& x : v.values()) x = static_cast<float>(rng.uniform(0.0, 0.05));
  CameraConfig tight = config(20);
  tight.detector_size_mm = {60.0, 60.0};  // 2 mm pixels: every voxel is hit by some ray
  const CameraView view = make_view(Vec3(0.2, 1, 0.3), Vec3::Zero(), tight);
  const RadiographImage a = render(v, view, std::nullopt);
  const RadiographImage b = render(v, view, std::nullopt);
  CHECK(a.pixels == b.pixels);
  CHECK(a.line_integral == b.line_integral);

  for (int trial = 0; trial < 5; ++trial) {
    VoxelVolume w = v;
    const int i = static_cast<int>(rng.below(10)), j = static_cast<int>(rng.below(10)), k = static_cast<int>(rng.below(10));
    w.value(i, j, k) += 0.5f;
    const RadiographImage c = render(w, view, std::nullopt);
    int increased = 0;
    for (std::size_t p = 0; p < c.line_integral.size(); ++p) {
      // Raw intensity exp(-L) must never increase.
      CHECK(std::exp(-c.line_integral[p]) <= std::exp(-a.line_integral[p]));
      if (c.line_integral[p] > a.line_integral[p]) ++increased;
    }
    CHECK(increased > 0);
  }
}

TEST_CASE("blend_real oracles") {
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(33));
  const RadiographImage real = white(33, 33);

  // Outside the frustum.
  const CannulaModel away = cannula_along_x(Vec3(0, 0, 5000), 2.0);
  CHECK(blend_real(real, v, away).pixels == real.pixels);
  // Zero attenuation.
  CHECK(blend_real(real, v, cannula_along_x(Vec3::Zero(), 0.0)).pixels == real.pixels);

  // Crossing the center: darkest value is exp(-2 r mu).
  const double mu = 0.8, r = 1.0;
  const RadiographImage band = blend_real(real, v, cannula_along_x(Vec3::Zero(), mu, r));
  const double darkest = *std::min_element(band.pixels.begin(), band.pixels.end());
  CHECK(darkest == doctest::Approx(std::exp(-2.0 * r * mu)).epsilon(0.01));
  CHECK(band.at(16, 16) == doctest::Approx(std::exp(-2.0 * r * mu)).epsilon(0.01));
  CHECK(band.at(16, 0) == 1.0);

  CHECK_THROWS_AS(blend_real(white(10, 10), v, away), Error);
}

TEST_CASE("blend_real is multiplicative") {
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), config(33));
  Rng rng(10);
  RadiographImage real = white(33, 33);
  for (auto& p : real.pixels) p = rng.uniform(0.2, 1.0);
  CannulaModel a = cannula_along_x(Vec3(0, 0, 0.5), 0.7);
  CannulaModel b = cannula_along_x(Vec3(0, 5, -0.3), 1.3);
  b.pose.rotation = frame_from_z(Vec3(0.3, 0, 1).normalized());
  const RadiographImage ab = blend_real(blend_real(real, v, a), v, b);
  const RadiographImage ba = blend_real(blend_real(real, v, b), v, a);
  for (std::size_t i = 0; i < ab.pixels.size(); ++i) {
    CHECK(ab.pixels[i] == doctest::Approx(ba.pixels[i]).epsilon(1e-12));
    const int x = static_cast<int>(i % 33), y = static_cast<int>(i / 33);
    const double sum = a.attenuation_per_mm * cannula_chord(a, v.source, v.pixel_center(x, y)) +
                       b.attenuation_per_mm * cannula_chord(b, v.source, v.pixel_center(x, y));
    CHECK(std::abs(ab.pixels[i] - real.pixels[i] * std::exp(-sum)) < 1e-6);
  }
}
