#pragma once

#include <vector>

#include "ctxmhe/geometry.hpp"
#include "ctxmhe/quad_model.hpp"

namespace ctxmhe {

/// Diagonal weighting of a generic MHE cost: arrival weight P, measurement
/// weight R_base, process weight Q_base, and forgetting factor gamma giving
/// stage weights R_k = gamma^(t-k) R_base, Q_k = gamma^(t-k) Q_base.
struct GenericWeights {
  Eigen::VectorXd p_diag;   // n
  Eigen::VectorXd r_diag;   // m
  Eigen::VectorXd q_diag;   // n
  double gamma = 1.0;

  int state_dim() const { return static_cast<int>(p_diag.size()); }
  int meas_dim() const { return static_cast<int>(r_diag.size()); }
  int theta_dim() const { return 2 * state_dim() + meas_dim() + 1; }

  Eigen::VectorXd theta() const;
  static GenericWeights from_theta(const Eigen::VectorXd& theta, int n, int m);
};

/// Quad weighting: n = 9, m = 6, 25 tunable entries.
struct MheWeights {
  Vec9 p_diag = Vec9::Ones();
  Vec6 r_diag = Vec6::Ones();
  Vec9 q_diag = Vec9::Ones();
  double gamma = 1.0;

  static constexpr double kEigFloor = 1e-4;
  static constexpr double kGammaFloor = 1e-3;

  void validate() const;
  GenericWeights generic() const;
  Eigen::VectorXd theta() const { return generic().theta(); }
  static MheWeights from_theta(const Eigen::VectorXd& theta);
};

/// Dense data of one horizon: model matrices, prior, measurements, and the
/// per-stage input offsets b_k of x_{k+1} = A x_k + b_k + w_k.
struct LinearGaussianWindow {
  Eigen::MatrixXd A;                   // n x n
  Eigen::MatrixXd H;                   // m x n
  Eigen::VectorXd xbar;                // prior estimate of the oldest state
  std::vector<Eigen::VectorXd> y;      // length L
  std::vector<Eigen::VectorXd> b;      // length L - 1

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(H.rows()); }
  int length() const { return static_cast<int>(y.size()); }
  void validate() const;
};

struct MheSolverOptions {
  int max_iterations = 50;
  double rel_cost_tol = 1e-10;
  double grad_tol = 1e-12;
};

struct GenericMheSolution {
  std::vector<Eigen::VectorXd> states;   // L
  std::vector<Eigen::VectorXd> noises;   // L - 1
  double cost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton on the full state trajectory; exact in one iteration
/// for this linear-Gaussian structure.
GenericMheSolution solve_linear_mhe(const LinearGaussianWindow& window,
                                    const GenericWeights& weights,
                                    const MheSolverOptions& opts = {});

/// Cost of a given state trajectory under the window's residuals.
double mhe_cost(const LinearGaussianWindow& window, const GenericWeights& weights,
                const std::vector<Eigen::VectorXd>& states);

// ---------------------------------------------------------------------------
// Quad-level augmented translational model: x = (p, v, F_dist), n = 9.
// p+ = p + v dt; v+ = v + (u + F/m - g e3) dt; F+ = F  (plus process noise).
// u is the commanded specific thrust (f/m) R e3.
// ---------------------------------------------------------------------------

struct AugmentedState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 f_dist = Vec3::Zero();

  Vec9 to_vec() const;
  static AugmentedState from_vec(const Vec9& x);
};

struct MheModel {
  double dt = 0.02;
  double mass = 0.033;
  double gravity = 9.81;

  Eigen::Matrix<double, 9, 9> a_matrix() const;
  Eigen::Matrix<double, 6, 9> h_matrix() const;
  Vec9 input_offset(const Vec3& u) const;
};

struct HorizonWindow {
  MheModel model;
  int horizon = 10;                 // N: max number of dynamics intervals
  AugmentedState prior;             // estimate of the oldest state
  std::vector<Vec6> y;              // up to N + 1 measurements
  std::vector<Vec3> u;              // up to N inputs (one fewer than y)
  long start_step = 0;              // absolute step index of y.front()

  int length() const { return static_cast<int>(y.size()); }
  bool full() const { return length() >= horizon + 1; }
  void validate() const;
  void push_initial(const Vec6& first_y);
  LinearGaussianWindow to_linear() const;
};

struct MheSolution {
  std::vector<AugmentedState> states;
  std::vector<Vec9> noises;
  double cost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  GenericMheSolution generic() const;
};

MheSolution solve_mhe(const HorizonWindow& window, const MheWeights& weights,
                      const MheSolverOptions& opts = {});

/// Appends one (measurement, input) pair. While the window is still growing
/// it keeps the prior; once full it drops the oldest sample and advances the
/// prior to the solution's second state (smoothed update).
HorizonWindow slide_window(const HorizonWindow& window, const Measurement& new_y,
                           const Vec3& new_u, const MheSolution& solution);

}  // namespace ctxmhe
