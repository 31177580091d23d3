#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmhe/quad_model.hpp"

namespace ctxmhe {

// Direction codes: 0 none, 1 left crosswind (+y), 2 right crosswind (-y),
// 3 headwind (-x), 4 tailwind (+x), 5 updraft (+z), 6 downdraft (-z).
// Speed levels: 0 none, 1 low, 2 high.
struct WindContext {
  int direction_code = 0;
  int speed_level = 0;
  Vec3 mean_force = Vec3::Zero();  // N, world
  double turbulence_std = 0.0;     // N, per axis
  double torque_scale = 0.0;       // N m of torque per N of turbulence

  void validate() const;
};

struct WindConfig {
  double low_force_n = 0.08;
  double high_force_n = 0.16;
  double turbulence_std_n = 0.01;
  double torque_scale = 0.01;
};

/// Unit vector for a direction code (zero vector for code 0).
Vec3 wind_direction_axis(int direction_code);

WindContext make_wind_context(int direction_code, int speed_level, const WindConfig& cfg);

/// All 13 valid contexts: {none} plus {6 directions} x {low, high}.
/// Index in the returned vector is the context id used throughout.
std::vector<WindContext> all_wind_contexts(const WindConfig& cfg);

int context_id(int direction_code, int speed_level);
std::string context_name(const WindContext& ctx);

/// Force/torque sample for one instant; deterministic in (ctx, time, seed)
/// and stationary within a context.
Disturbance wind_disturbance(const WindContext& ctx, double time, std::uint64_t rng_seed);

}  // namespace ctxmhe
