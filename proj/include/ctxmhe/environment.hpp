#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "ctxmhe/lee_controller.hpp"
#include "ctxmhe/wind.hpp"

namespace ctxmhe {

/// Flight volume with one active wind context per ground quadrant.
struct Environment {
  int id = 1;
  std::string name;
  Vec3 volume_min{-0.75, -0.75, 0.0};
  Vec3 volume_max{0.75, 0.75, 1.0};
  // Quadrant index: (x >= cx) * 2 + (y >= cy).
  std::array<int, 4> quadrant_ctx{0, 0, 0, 0};
  double no_wind_margin = 0.0;  // band around quadrant boundaries with no wind

  int active_context(const Vec3& pos) const;
  bool contains(const Vec3& pos) const;
};

std::vector<Environment> default_environments();

/// Uniform-context environment used for training and pool evaluation.
Environment uniform_environment(int ctx_id);

class Trajectory {
 public:
  enum class Kind { kHover, kSquare, kFigure8, kLine };

  static Trajectory hover(int corner, double rise_height = 0.5, double hold_s = 5.0,
                          double corner_xy = 0.6);
  static Trajectory square(double speed = 0.3, double rise_height = 0.5,
                           double corner_xy = 0.6);
  static Trajectory figure8(double speed = 0.3, double rise_height = 0.5, double ax = 0.55,
                            double ay = 0.3);
  /// Straight line at constant height, constant speed, short hover lead-in.
  static Trajectory line(const Vec3& from, const Vec3& to, double speed = 0.3);

  ReferencePoint at(double t) const;
  double duration() const { return duration_; }
  Kind kind() const { return kind_; }
  Vec3 start() const { return at(0.0).x_d; }
  static const char* kind_name(Kind k);

 private:
  struct Segment {
    double t0 = 0.0, t1 = 0.0;
    // Position/velocity/acceleration callback over local time.
    std::function<void(double, Vec3&, Vec3&, Vec3&)> eval;
  };

  Kind kind_ = Kind::kHover;
  double duration_ = 0.0;
  std::vector<Segment> segments_;

  void add_rise(const Vec3& ground, double height, double peak_speed);
  void add_hold(const Vec3& at_point, double seconds);
};

}  // namespace ctxmhe
