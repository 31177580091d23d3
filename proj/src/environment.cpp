#include "ctxmhe/environment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ctxmhe {

int Environment::active_context(const Vec3& pos) const {
  const double cx = 0.5 * (volume_min.x() + volume_max.x());
  const double cy = 0.5 * (volume_min.y() + volume_max.y());
  if (no_wind_margin > 0.0 &&
      (std::abs(pos.x() - cx) < no_wind_margin || std::abs(pos.y() - cy) < no_wind_margin)) {
    return 0;
  }
  const int idx = (pos.x() >= cx ? 2 : 0) + (pos.y() >= cy ? 1 : 0);
  return quadrant_ctx[idx];
}

bool Environment::contains(const Vec3& pos) const {
  return (pos.array() >= volume_min.array()).all() && (pos.array() <= volume_max.array()).all();
}

std::vector<Environment> default_environments() {
  // Quadrant order: [x<cx,y<cy], [x<cx,y>=cy], [x>=cx,y<cy], [x>=cx,y>=cy].
  std::vector<Environment> envs(3);
  envs[0].id = 1;
  envs[0].name = "two_lateral_fans";
  envs[0].quadrant_ctx = {0, context_id(1, 2), context_id(2, 1), context_id(4, 1)};
  envs[1].id = 2;
  envs[1].name = "opposed_fans";
  envs[1].quadrant_ctx = {context_id(3, 2), context_id(4, 1), context_id(2, 2),
                          context_id(1, 1)};
  envs[2].id = 3;
  envs[2].name = "angled_drafts";
  envs[2].quadrant_ctx = {0, context_id(6, 1), context_id(5, 1), context_id(5, 2)};
  return envs;
}

Environment uniform_environment(int ctx_id) {
  Environment env;
  env.id = 0;
  env.name = "uniform";
  env.quadrant_ctx = {ctx_id, ctx_id, ctx_id, ctx_id};
  return env;
}

namespace {

// Cosine s-curve rise/descent between two heights; zero end velocities.
void cosine_profile(double tau, double t_total, double z0, double z1, double& z, double& vz,
                    double& az) {
  const double pi = std::numbers::pi;
  const double s = 0.5 * (1.0 - std::cos(pi * tau / t_total));
  z = z0 + (z1 - z0) * s;
  vz = (z1 - z0) * 0.5 * pi / t_total * std::sin(pi * tau / t_total);
  az = (z1 - z0) * 0.5 * pi * pi / (t_total * t_total) * std::cos(pi * tau / t_total);
}

}  // namespace

void Trajectory::add_rise(const Vec3& ground, double height, double peak_speed) {
  const double pi = std::numbers::pi;
  const double t_rise = 0.5 * pi * height / peak_speed;
  const double t0 = duration_;
  segments_.push_back({t0, t0 + t_rise,
                       [ground, height, t_rise](double tau, Vec3& x, Vec3& v, Vec3& a) {
                         double z, vz, az;
                         cosine_profile(tau, t_rise, ground.z(), ground.z() + height, z, vz, az);
                         x = Vec3(ground.x(), ground.y(), z);
                         v = Vec3(0, 0, vz);
                         a = Vec3(0, 0, az);
                       }});
  duration_ += t_rise;
}

void Trajectory::add_hold(const Vec3& at_point, double seconds) {
  const double t0 = duration_;
  segments_.push_back({t0, t0 + seconds, [at_point](double, Vec3& x, Vec3& v, Vec3& a) {
                         x = at_point;
                         v = Vec3::Zero();
                         a = Vec3::Zero();
                       }});
  duration_ += seconds;
}

Trajectory Trajectory::hover(int corner, double rise_height, double hold_s, double corner_xy) {
  if (corner < 0 || corner > 3) throw std::invalid_argument("Trajectory: corner must be 0..3");
  static const double sx[4] = {-1, -1, 1, 1};
  static const double sy[4] = {-1, 1, -1, 1};
  const Vec3 ground(sx[corner] * corner_xy, sy[corner] * corner_xy, 0.0);
  Trajectory traj;
  traj.kind_ = Kind::kHover;
  traj.add_rise(ground, rise_height, 0.3);
  traj.add_hold(ground + Vec3(0, 0, rise_height), hold_s);
  // Descent mirrors the rise.
  const double pi = std::numbers::pi;
  const double t_land = 0.5 * pi * rise_height / 0.3;
  const double t0 = traj.duration_;
  traj.segments_.push_back(
      {t0, t0 + t_land, [ground, rise_height, t_land](double tau, Vec3& x, Vec3& v, Vec3& a) {
         double z, vz, az;
         cosine_profile(tau, t_land, ground.z() + rise_height, ground.z(), z, vz, az);
         x = Vec3(ground.x(), ground.y(), z);
         v = Vec3(0, 0, vz);
         a = Vec3(0, 0, az);
       }});
  traj.duration_ += t_land;
  traj.add_hold(ground, 0.5);
  return traj;
}

Trajectory Trajectory::square(double speed, double rise_height, double corner_xy) {
  Trajectory traj;
  traj.kind_ = Kind::kSquare;
  const Vec3 start(-corner_xy, -corner_xy, 0.0);
  traj.add_rise(start, rise_height, speed);
  const double z = rise_height;
  // Clockwise from the bottom-left corner in the bird's-eye view.
  const Vec3 corners[5] = {Vec3(-corner_xy, -corner_xy, z), Vec3(-corner_xy, corner_xy, z),
                           Vec3(corner_xy, corner_xy, z), Vec3(corner_xy, -corner_xy, z),
                           Vec3(-corner_xy, -corner_xy, z)};
  for (int i = 0; i < 4; ++i) {
    const Vec3 a = corners[i];
    const Vec3 b = corners[i + 1];
    const double len = (b - a).norm();
    const double t_seg = len / speed;
    const double t0 = traj.duration_;
    traj.segments_.push_back({t0, t0 + t_seg, [a, b, t_seg](double tau, Vec3& x, Vec3& v,
                                                            Vec3& acc) {
                               const Vec3 dir = (b - a) / t_seg;
                               x = a + dir * tau;
                               v = dir;
                               acc = Vec3::Zero();
                             }});
    traj.duration_ += t_seg;
  }
  traj.add_hold(corners[4], 1.0);
  return traj;
}

Trajectory Trajectory::figure8(double speed, double rise_height, double ax, double ay) {
  Trajectory traj;
  traj.kind_ = Kind::kFigure8;
  const Vec3 start(0.0, 0.0, 0.0);
  traj.add_rise(start, rise_height, speed);

  // Gerono lemniscate x = ax sin(phi), y = ay sin(2 phi); the cycle time is
  // set so the mean path speed equals `speed`.
  double path_len = 0.0;
  const int kQuad = 2000;
  double prev_x = 0.0, prev_y = 0.0;
  for (int i = 1; i <= kQuad; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / kQuad;
    const double x = ax * std::sin(phi);
    const double y = ay * std::sin(2.0 * phi);
    path_len += std::hypot(x - prev_x, y - prev_y);
    prev_x = x;
    prev_y = y;
  }
  const double t_cycle = path_len / speed;
  const double omega = 2.0 * std::numbers::pi / t_cycle;
  const double t_ramp = 1.0;
  const double z = rise_height;
  const double t0 = traj.duration_;
  const double t_total = t_cycle + 0.5 * t_ramp;
  traj.segments_.push_back(
      {t0, t0 + t_total, [ax, ay, omega, t_ramp, z](double tau, Vec3& x, Vec3& v, Vec3& acc) {
         // Quadratic ramp on the phase avoids a velocity step at entry.
         double phi, dphi, ddphi;
         if (tau < t_ramp) {
           phi = 0.5 * omega * tau * tau / t_ramp;
           dphi = omega * tau / t_ramp;
           ddphi = omega / t_ramp;
         } else {
           phi = omega * (tau - 0.5 * t_ramp);
           dphi = omega;
           ddphi = 0.0;
         }
         const double s1 = std::sin(phi), c1 = std::cos(phi);
         const double s2 = std::sin(2 * phi), c2 = std::cos(2 * phi);
         x = Vec3(ax * s1, ay * s2, z);
         v = Vec3(ax * c1 * dphi, 2 * ay * c2 * dphi, 0);
         acc = Vec3(ax * (c1 * ddphi - s1 * dphi * dphi),
                    2 * ay * (c2 * ddphi - 2 * s2 * dphi * dphi), 0);
       }});
  traj.duration_ += t_total;
  traj.add_hold(Vec3(0, 0, z), 0.5);
  return traj;
}

Trajectory Trajectory::line(const Vec3& from, const Vec3& to, double speed) {
  Trajectory traj;
  traj.kind_ = Kind::kLine;
  traj.add_hold(from, 0.5);

  // Cosine-blended speed profile: ramp up over t_r, cruise, ramp down.
  const double len = (to - from).norm();
  const Vec3 dir = (to - from) / len;
  const double t_r = 1.0;
  const double ramp_dist = 0.5 * speed * t_r;  // distance covered per ramp
  const double cruise = len - 2.0 * ramp_dist;
  if (cruise < 0.0) throw std::invalid_argument("Trajectory::line: segment too short");
  const double t_cruise = cruise / speed;
  const double t_total = 2.0 * t_r + t_cruise;
  const double pi = std::numbers::pi;
  const double t0 = traj.duration_;
  traj.segments_.push_back(
      {t0, t0 + t_total,
       [from, dir, speed, t_r, t_cruise, t_total, ramp_dist, pi](double tau, Vec3& x, Vec3& v,
                                                                 Vec3& acc) {
         double s, ds, dds;
         if (tau < t_r) {
           s = 0.5 * speed * (tau - t_r / pi * std::sin(pi * tau / t_r));
           ds = 0.5 * speed * (1.0 - std::cos(pi * tau / t_r));
           dds = 0.5 * speed * pi / t_r * std::sin(pi * tau / t_r);
         } else if (tau < t_r + t_cruise) {
           s = ramp_dist + speed * (tau - t_r);
           ds = speed;
           dds = 0.0;
         } else {
           const double u = tau - t_r - t_cruise;
           s = ramp_dist + speed * t_cruise +
               0.5 * speed * (u + t_r / pi * std::sin(pi * u / t_r));
           ds = 0.5 * speed * (1.0 + std::cos(pi * u / t_r));
           dds = -0.5 * speed * pi / t_r * std::sin(pi * u / t_r);
         }
         x = from + dir * s;
         v = dir * ds;
         acc = dir * dds;
       }});
  traj.duration_ += t_total;
  traj.add_hold(to, 0.5);
  return traj;
}

ReferencePoint Trajectory::at(double t) const {
  if (segments_.empty()) throw std::logic_error("Trajectory: empty");
  const Segment* seg = &segments_.back();
  double tau = seg->t1 - seg->t0;
  for (const auto& s : segments_) {
    if (t < s.t1) {
      seg = &s;
      tau = std::max(0.0, t - s.t0);
      break;
    }
  }
  ReferencePoint ref;
  seg->eval(tau, ref.x_d, ref.v_d, ref.a_d);
  if (&segments_.back() == seg && t >= seg->t1) {
    // Past the end: park at the terminal point.
    seg->eval(seg->t1 - seg->t0, ref.x_d, ref.v_d, ref.a_d);
    ref.v_d.setZero();
    ref.a_d.setZero();
  }
  ref.yaw_d = 0.0;
  return ref;
}

const char* Trajectory::kind_name(Kind k) {
  switch (k) {
    case Kind::kHover: return "hover";
    case Kind::kSquare: return "square";
    case Kind::kFigure8: return "figure8";
    case Kind::kLine: return "line";
  }
  return "unknown";
}

}  // namespace ctxmhe
