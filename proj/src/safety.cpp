#include "spinesim/safety.hpp"

#include "parallel.hpp"
#include "spinesim/error.hpp"

#include <cmath>

namespace spinesim {

namespace {
// Absorbs floating round-off at exactly constructed threshold values.
constexpr double kGradeEps = 1e-9;

/// Minimum distance between segments [p0, p1] and [q0, q1].
double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-15 && e <= 1e-15) return r.norm();
  if (a <= 1e-15) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-15) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 1e-15 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + d1 * s) - (q0 + d2 * t)).norm();
}

}  // namespace

void Trajectory::validate() const {
  if (!(depth_mm > 0.0) || !std::isfinite(depth_mm)) {
    contract_error("zero_length_trajectory", "trajectory depth must be > 0");
  }
  if (!entry.allFinite() || std::abs(direction.norm() - 1.0) > 1e-6) {
    contract_error("invalid_trajectory", "trajectory direction must be unit-norm");
  }
}

char grade_letter(Grade g) { return static_cast<char>('A' + static_cast<int>(g)); }

Grade parse_grade(char c) {
  if (c < 'A' || c > 'E') contract_error("invalid_grade", std::string("unknown grade '") + c + "'");
  return static_cast<Grade>(c - 'A');
}

Grade grade_for_breach(double max_breach_mm, bool extra_pedicular) {
  if (extra_pedicular) return Grade::E;
  if (max_breach_mm <= kGradeEps) return Grade::A;
  if (max_breach_mm <= 2.0 + kGradeEps) return Grade::B;
  if (max_breach_mm <= 4.0 + kGradeEps) return Grade::C;
  if (max_breach_mm <= 6.0 + kGradeEps) return Grade::D;
  return Grade::E;
}

double BreachReport::mean_wall_distance() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : profile) {
    if (!s.inside) continue;
    sum += s.distance_mm;
    ++n;
  }
  return n ? sum / n : 0.0;
}

std::vector<WallSample> wall_distance_profile(const VertebraMesh& m, const Trajectory& traj,
                                              double step_mm) {
  if (!(step_mm > 0.0)) contract_error("invalid_step", "profile step must be > 0");
  traj.validate();
  std::vector<WallSample> out;
  const auto entry = m.first_entry(traj.entry, traj.direction, traj.depth_mm);
  if (!entry) return out;
  const int n = static_cast<int>(std::floor((traj.depth_mm - *entry) / step_mm + 1e-9));
  out.resize(static_cast<std::size_t>(std::max(0, n)));
  detail::parallel_for(static_cast<int>(out.size()), [&](int k) {
    const double arc = *entry + (k + 1) * step_mm;
    const double sd = m.signed_distance(traj.entry + arc * traj.direction);
    out[k] = {arc, std::abs(sd), sd <= 0.0};
  });
  return out;
}

BreachReport assess_cannula(const VertebraMesh& m, const Trajectory& traj, double radius_mm,
                            const SafetySampling& sampling) {
  traj.validate();
  if (!(radius_mm > 0.0)) contract_error("invalid_radius", "cannula radius must be > 0");
  if (!(sampling.axial_step_mm > 0.0) || sampling.circumferential_samples < 1) {
    contract_error("invalid_sampling", "sampling step and count must be positive");
  }
  BreachReport report;
  report.breach_location = traj.tip();
  const auto entry = m.first_entry(traj.entry, traj.direction, traj.depth_mm);
  if (!entry) {
    report.extra_pedicular = true;
    report.grade = Grade::E;
    return report;
  }
  report.profile = wall_distance_profile(m, traj, sampling.profile_step_mm);

  if (!m.pedicle_regions().empty()) {
    const Vec3 a = traj.entry + *entry * traj.direction;
    const Vec3 b = traj.tip();
    bool through = false;
    for (const auto& r : m.pedicle_regions()) {
      if (segment_distance(a, b, r.start, r.end) <= r.radius_mm) through = true;
    }
    report.extra_pedicular = !through;
  }

  const Mat3 frame = frame_from_z(traj.direction);
  const Vec3 u = frame.col(0), v = frame.col(1);
  const double span = traj.depth_mm - *entry;
  const int rings = std::max(1, static_cast<int>(std::ceil(span / sampling.axial_step_mm - 1e-9)));
  const int around = sampling.circumferential_samples;

  // Entry wound: a surface line (parallel to the axis) that enters bone within
  // one diameter of the axis entry is skipped until it has entered, so the rim
  // of the hole on a curved or oblique face is not a breach. Lines entering
  // later, or never, are checked along the whole intra-osseous span.
  std::vector<Vec3> offset(around);
  std::vector<double> counted_from(around, *entry);
  for (int s = 0; s < around; ++s) {
    const double theta = 2.0 * kPi * s / around;
    offset[s] = radius_mm * (std::cos(theta) * u + std::sin(theta) * v);
    const auto t = m.first_entry(traj.entry + offset[s], traj.direction, traj.depth_mm);
    if (t && *t <= *entry + 2.0 * radius_mm) counted_from[s] = std::max(*entry, *t);
  }

  std::vector<double> ring_max(rings + 1, 0.0);
  std::vector<Vec3> ring_loc(rings + 1, traj.tip());
  detail::parallel_for(rings + 1, [&](int k) {
    // The last ring sits exactly at the tip.
    const double arc = k == rings ? traj.depth_mm : *entry + span * k / rings;
    const Vec3 c = traj.entry + arc * traj.direction;
    for (int s = 0; s < around; ++s) {
      if (arc < counted_from[s]) continue;
      const Vec3 p = c + offset[s];
      const double sd = m.signed_distance(p);
      if (sd > ring_max[k]) {
        ring_max[k] = sd;
        ring_loc[k] = p;
      }
    }
  });
  for (int k = 0; k <= rings; ++k) {
    if (ring_max[k] > report.max_breach_mm) {
      report.max_breach_mm = ring_max[k];
      report.breach_location = ring_loc[k];
    }
  }
  report.grade = grade_for_breach(report.max_breach_mm, report.extra_pedicular);
  return report;
}

}  // namespace spinesim
