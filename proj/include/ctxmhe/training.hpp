#pragma once

#include <cstdint>
#include <vector>

#include "ctxmhe/config.hpp"
#include "ctxmhe/environment.hpp"
#include "ctxmhe/selection.hpp"
#include "ctxmhe/sensitivity.hpp"
#include "ctxmhe/weight_net.hpp"

namespace ctxmhe {

/// Sum of W-weighted deviations between estimated and reference states over
/// one horizon. Uses the square-root weighted norm unless `squared` is set.
double tracking_loss(const MheSolution& solution, const std::vector<AugmentedState>& reference,
                     const Eigen::Matrix<double, 9, 9>& w, bool squared = false);

/// d(tracking_loss)/d(xhat_k) for every window state.
std::vector<Vec9> tracking_loss_gradient(const MheSolution& solution,
                                         const std::vector<AugmentedState>& reference,
                                         const Eigen::Matrix<double, 9, 9>& w,
                                         bool squared = false);

/// Raw-output bias that makes the initial weights resemble an EKF tuning of
/// the configured noise levels.
Eigen::VectorXd default_output_bias(const FullConfig& cfg);

Vec6 innovation_features(const MheModel& model, const AugmentedState& prev_terminal,
                         const Vec3& prev_u, const Vec6& y_new);

struct EpisodeStats {
  double mean_loss = 0.0;
  int steps = 0;
  int skipped_updates = 0;
  double rmse_ape = 0.0;
  double max_ape = 0.0;
};

struct EpisodeSetup {
  const FullConfig* cfg = nullptr;
  WindContext ctx;
  Trajectory traj;
  int steps_override = 0;  // 0: use the configured episode length
};

/// One closed-loop episode; with `learn` set, applies an Adam update per
/// control step through the sensitivity chain. Steps whose MHE solve fails
/// to converge are skipped for the update and counted.
EpisodeStats run_closed_loop_episode(WeightNet& net, const ThetaMapping& mapping,
                                     AdamOptimizer* adam, const EpisodeSetup& setup,
                                     std::uint64_t seed, bool learn);

EpisodeStats train_episode(WeightNet& net, const ThetaMapping& mapping, AdamOptimizer& adam,
                           const EpisodeSetup& setup, std::uint64_t seed);

struct TrainRunResult {
  WeightNet net;
  ThetaMapping mapping;
  CheckpointMetadata metadata;
};

/// Repeats episodes until successive mean-episode losses differ by less than
/// the configured threshold (or the episode cap is reached).
TrainRunResult train_to_convergence(const EpisodeSetup& setup, std::uint64_t seed);

/// Fraction of a run with no parameter updates; reports the mean tracking
/// loss and APE statistics of the true trajectory.
EpisodeStats eval_episode(const WeightNet& net, const ThetaMapping& mapping,
                          const EpisodeSetup& setup, std::uint64_t seed);

/// Same closed-loop line episode driven by the EKF baseline with the
/// disturbance-unaware controller.
EpisodeStats eval_episode_ekf(const EpisodeSetup& setup, std::uint64_t seed);

/// Simulator-backed training/evaluation services for the contextual loop.
class SimContextBackend : public ContextTrainBackend {
 public:
  explicit SimContextBackend(const FullConfig& cfg) : cfg_(cfg) {}

  TrainedModel train(int ctx_id, std::uint64_t seed) override;
  std::vector<double> evaluate(const TrainedModel& model, std::uint64_t seed) override;

  Trajectory training_trajectory() const;

 private:
  FullConfig cfg_;
};

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

struct ThetaGradcheckRow {
  int component = 0;
  double max_rel_err = 0.0;
};

struct ThetaGradcheckReport {
  std::vector<ThetaGradcheckRow> rows;  // 25 components
  double overall_max_rel_err = 0.0;
  int instances = 0;
  double seconds = 0.0;
  bool pass = false;
};

/// Analytic sensitivity recursion vs central finite differences on random
/// quad windows (n = 9, N from config).
ThetaGradcheckReport run_theta_gradcheck(const FullConfig& cfg, int instances = 20,
                                         std::uint64_t seed = 7, double tol = 1e-3,
                                         double fd_step = 1e-5);

struct EndToEndGradcheckReport {
  double max_rel_err = 0.0;
  int parameters_checked = 0;
  bool pass = false;
};

/// Full network-to-loss gradient on a short teacher-forced episode (plant
/// rollout independent of the network, raw-measurement features, growing
/// window) against central finite differences over sampled parameters.
EndToEndGradcheckReport run_end_to_end_gradcheck(const FullConfig& cfg, int episode_steps = 3,
                                                 int n_params = 50, std::uint64_t seed = 11,
                                                 double tol = 1e-2, double fd_step = 1e-4);

}  // namespace ctxmhe
