#include "ctxmhe/wind.hpp"

#include <cstring>
#include <stdexcept>

#include "ctxmhe/rng.hpp"

namespace ctxmhe {

void WindContext::validate() const {
  const bool no_dir = direction_code == 0;
  const bool no_speed = speed_level == 0;
  if (direction_code < 0 || direction_code > 6 || speed_level < 0 || speed_level > 2 ||
      no_dir != no_speed) {
    throw std::invalid_argument("WindContext: invalid (direction, level) pair");
  }
  if (no_speed && mean_force.norm() != 0.0)
    throw std::invalid_argument("WindContext: mean force must be zero at speed level 0");
  if (!no_speed && mean_force.norm() == 0.0)
    throw std::invalid_argument("WindContext: mean force must be nonzero at speed level > 0");
  if (turbulence_std < 0.0) throw std::invalid_argument("WindContext: negative turbulence");
}

Vec3 wind_direction_axis(int direction_code) {
  switch (direction_code) {
    case 0: return Vec3::Zero();
    case 1: return Vec3(0, 1, 0);    // left crosswind
    case 2: return Vec3(0, -1, 0);   // right crosswind
    case 3: return Vec3(-1, 0, 0);   // headwind
    case 4: return Vec3(1, 0, 0);    // tailwind
    case 5: return Vec3(0, 0, 1);    // updraft
    case 6: return Vec3(0, 0, -1);   // downdraft
    default: throw std::invalid_argument("wind_direction_axis: bad direction code");
  }
}

WindContext make_wind_context(int direction_code, int speed_level, const WindConfig& cfg) {
  WindContext ctx;
  ctx.direction_code = direction_code;
  ctx.speed_level = speed_level;
  ctx.torque_scale = cfg.torque_scale;
  if (speed_level == 0) {
    ctx.turbulence_std = 0.0;
  } else {
    const double mag = speed_level == 1 ? cfg.low_force_n : cfg.high_force_n;
    ctx.mean_force = mag * wind_direction_axis(direction_code);
    ctx.turbulence_std = cfg.turbulence_std_n;
  }
  ctx.validate();
  return ctx;
}

std::vector<WindContext> all_wind_contexts(const WindConfig& cfg) {
  std::vector<WindContext> out;
  out.push_back(make_wind_context(0, 0, cfg));
  for (int dir = 1; dir <= 6; ++dir) {
    for (int level = 1; level <= 2; ++level) {
      out.push_back(make_wind_context(dir, level, cfg));
    }
  }
  return out;
}

int context_id(int direction_code, int speed_level) {
  if (direction_code == 0 && speed_level == 0) return 0;
  if (direction_code >= 1 && direction_code <= 6 && (speed_level == 1 || speed_level == 2)) {
    return 1 + (direction_code - 1) * 2 + (speed_level - 1);
  }
  throw std::invalid_argument("context_id: invalid (direction, level) pair");
}

std::string context_name(const WindContext& ctx) {
  static const char* dirs[] = {"none",     "left_cross", "right_cross", "head",
                               "tail",     "updraft",    "downdraft"};
  static const char* lvls[] = {"", "_low", "_high"};
  return std::string(dirs[ctx.direction_code]) + lvls[ctx.speed_level];
}

Disturbance wind_disturbance(const WindContext& ctx, double time, std::uint64_t rng_seed) {
  ctx.validate();
  std::uint64_t time_bits;
  static_assert(sizeof(time_bits) == sizeof(time));
  std::memcpy(&time_bits, &time, sizeof(time_bits));
  Rng rng(mix_seed(rng_seed, seed_tag::kWind, time_bits));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Disturbance d;
  d.force = ctx.mean_force;
  for (int i = 0; i < 3; ++i) d.force(i) += ctx.turbulence_std * gauss(rng);
  const double tau_std = ctx.torque_scale * ctx.turbulence_std;
  for (int i = 0; i < 3; ++i) d.torque(i) = tau_std * gauss(rng);
  return d;
}

}  // namespace ctxmhe
