#pragma once

#include <utility>
#include <vector>

#include "ctxmhe/config.hpp"
#include "ctxmhe/geometry.hpp"

namespace ctxmhe {

using ContextPoint = Eigen::Vector2d;  // (direction_code, speed_level)

/// GP regression with an RBF kernel over the 2-D context space.
class GpModel {
 public:
  explicit GpModel(const GpConfig& cfg = {}) : cfg_(cfg) {}

  void add_observation(const ContextPoint& c, double value);
  int size() const { return static_cast<int>(x_.size()); }

  double kernel(const ContextPoint& a, const ContextPoint& b) const;

  /// Posterior (mean, variance) at a query point. Escalates jitter tenfold
  /// on ill-conditioning, then throws if the limit is reached.
  std::pair<double, double> posterior(const ContextPoint& query) const;

  const std::vector<ContextPoint>& inputs() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  GpConfig cfg_;
  std::vector<ContextPoint> x_;
  std::vector<double> y_;
};

}  // namespace ctxmhe
