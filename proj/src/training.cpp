#include "ctxmhe/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ctxmhe/lee_controller.hpp"
#include "ctxmhe/rng.hpp"

namespace ctxmhe {

double tracking_loss(const MheSolution& solution, const std::vector<AugmentedState>& reference,
                     const Eigen::Matrix<double, 9, 9>& w, bool squared) {
  if (solution.states.size() != reference.size())
    throw std::invalid_argument("tracking_loss: sequence length mismatch");
  double loss = 0.0;
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const Vec9 e = solution.states[k].to_vec() - reference[k].to_vec();
    const double q = e.dot(w * e);
    loss += squared ? q : std::sqrt(std::max(q, 0.0));
  }
  return loss;
}

std::vector<Vec9> tracking_loss_gradient(const MheSolution& solution,
                                         const std::vector<AugmentedState>& reference,
                                         const Eigen::Matrix<double, 9, 9>& w, bool squared) {
  if (solution.states.size() != reference.size())
    throw std::invalid_argument("tracking_loss_gradient: sequence length mismatch");
  std::vector<Vec9> grads(reference.size());
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const Vec9 e = solution.states[k].to_vec() - reference[k].to_vec();
    if (squared) {
      grads[k] = 2.0 * (w * e);
    } else {
      const double norm = std::sqrt(std::max(e.dot(w * e), 0.0));
      grads[k] = norm > 1e-12 ? Vec9((w * e) / norm) : Vec9(Vec9::Zero());
    }
  }
  return grads;
}

Eigen::VectorXd default_output_bias(const FullConfig& cfg) {
  const double scale = cfg.net.weight_scale;
  const ThetaMapping mapping;
  Eigen::VectorXd bias(25);
  // Arrival weight from loose prior covariance guesses.
  const double p0_cov[9] = {1e-4, 1e-4, 1e-4, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2};
  for (int i = 0; i < 9; ++i)
    bias(i) = softplus_inverse(std::max(scale / p0_cov[i], 1e-2) - mapping.eps);
  // Measurement weight near the inverse noise variance.
  for (int j = 0; j < 6; ++j) {
    const double var = std::max(cfg.harness.meas_noise_std(j) * cfg.harness.meas_noise_std(j),
                                1e-8);
    bias(9 + j) = softplus_inverse(std::max(scale / var, 1e-2) - mapping.eps);
  }
  // Process weight: near-exact position/velocity chains, adaptable
  // disturbance random walk.
  const double q_nat[9] = {4e6, 4e6, 4e6, 1e6, 1e6, 1e6, 5e3, 5e3, 5e3};
  for (int i = 0; i < 9; ++i)
    bias(15 + i) = softplus_inverse(std::max(scale * q_nat[i], 1e-2) - mapping.eps);
  bias(24) = cfg.net.gamma_bias;
  return bias;
}

Vec6 innovation_features(const MheModel& model, const AugmentedState& prev_terminal,
                         const Vec3& prev_u, const Vec6& y_new) {
  const Vec9 x_pred = model.a_matrix() * prev_terminal.to_vec() + model.input_offset(prev_u);
  Vec6 f;
  f.head<3>() = y_new.head<3>() - x_pred.head<3>();
  f.tail<3>() = x_pred.segment<3>(3);
  return f;
}

namespace {

// Flow membership per absolute step; the disturbance reference for stage k
// of a window is the context mean only where the plant was inside the flow.
std::vector<AugmentedState> window_references_flow(const HorizonWindow& window,
                                                   const Trajectory& traj, double dt,
                                                   const Vec3& mean_force,
                                                   const std::vector<char>& in_flow) {
  std::vector<AugmentedState> refs(window.length());
  for (int k = 0; k < window.length(); ++k) {
    const long step = window.start_step + k;
    const ReferencePoint rp = traj.at(step * dt);
    refs[k].p = rp.x_d;
    refs[k].v = rp.v_d;
    refs[k].f_dist =
        (step < static_cast<long>(in_flow.size()) && in_flow[step]) ? mean_force : Vec3::Zero();
  }
  return refs;
}

Eigen::VectorXd flatten_grads(const WeightNet::Grads& g) {
  const int total = static_cast<int>(g.w1.size() + g.b1.size() + g.w2.size() + g.b2.size() +
                                     g.w3.size() + g.b3.size());
  Eigen::VectorXd out(total);
  int off = 0;
  auto put_m = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out(off++) = m(i, j);
  };
  auto put_v = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out(off++) = v(i);
  };
  put_m(g.w1);
  put_v(g.b1);
  put_m(g.w2);
  put_v(g.b2);
  put_m(g.w3);
  put_v(g.b3);
  return out;
}

}  // namespace

EpisodeStats run_closed_loop_episode(WeightNet& net, const ThetaMapping& mapping,
                                     AdamOptimizer* adam, const EpisodeSetup& setup,
                                     std::uint64_t seed, bool learn) {
  const FullConfig& cfg = *setup.cfg;
  const double dt = cfg.mhe.dt;
  const int steps = setup.steps_override > 0 ? setup.steps_override : cfg.train.episode_steps;
  if (learn && adam == nullptr)
    throw std::invalid_argument("run_closed_loop_episode: learning requires an optimizer");

  const MotorMixer mixer(cfg.params);
  const MheModel model{dt, cfg.params.mass, cfg.params.gravity};
  const Eigen::Matrix<double, 9, 9> w_loss = learn
      ? Eigen::Matrix<double, 9, 9>(cfg.train.loss_weight_diag.asDiagonal())
      : Eigen::Matrix<double, 9, 9>(cfg.train.eval_loss_weight_diag.asDiagonal());
  const bool squared = learn ? cfg.train.squared_norm_loss : cfg.train.eval_squared_norm_loss;
  const Vec3 f_ref_mean =
      cfg.train.supervised_disturbance ? setup.ctx.mean_force : Vec3(Vec3::Zero());
  MheSolverOptions solver_opts;
  solver_opts.max_iterations = cfg.mhe.max_iterations;
  solver_opts.rel_cost_tol = cfg.mhe.rel_cost_tol;

  RigidBodyState plant;
  plant.p = setup.traj.at(0.0).x_d;

  HorizonWindow window;
  window.model = model;
  window.horizon = cfg.mhe.horizon;
  window.prior = AugmentedState{plant.p, plant.v, Vec3::Zero()};

  MheSolution sol;
  bool have_sol = false;
  Vec3 last_u = Vec3::Zero();
  const std::uint64_t wind_seed = mix_seed(seed, seed_tag::kWind);

  EpisodeStats stats;
  double loss_sum = 0.0;
  double ape_sq_sum = 0.0;
  std::vector<char> flow_history;
  flow_history.reserve(steps);

  for (int t = 0; t < steps; ++t) {
    const double time = t * dt;
    const ReferencePoint setpoint = setup.traj.at(time);
    const Measurement y =
        measure(plant, cfg.harness.meas_noise_std, mix_seed(seed, seed_tag::kMeasure, t), time);

    Vec6 features = Vec6::Zero();
    if (cfg.net.feature_mode == FeatureMode::kRawMeasurement) {
      features = y.y;
    } else if (have_sol) {
      features = innovation_features(model, sol.states.back(), last_u, y.y);
    }

    WeightNet::Cache cache;
    const Eigen::VectorXd raw = net.forward_raw(features, &cache);
    const MheWeights weights = mapping.map(raw);

    if (t == 0) {
      window.push_initial(y.y);
    } else {
      window = slide_window(window, y, last_u, sol);
    }
    const bool in_flow = plant.p.x() >= cfg.harness.wind_onset_x &&
                         plant.p.x() <= cfg.harness.wind_exit_x;
    flow_history.push_back(in_flow ? 1 : 0);

    sol = solve_mhe(window, weights, solver_opts);
    have_sol = true;

    const std::vector<AugmentedState> refs = window_references_flow(
        window, setup.traj, dt, f_ref_mean, flow_history);
    loss_sum += tracking_loss(sol, refs, w_loss, squared);

    if (learn) {
      if (sol.converged) {
        try {
          const SensitivitySolution sens =
              mhe_sensitivity(window, weights, sol, cfg.mhe.cond_limit);
          const std::vector<Vec9> dl_dx =
              tracking_loss_gradient(sol, refs, w_loss, squared);
          Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(25);
          for (int k = 0; k < window.length(); ++k)
            g_theta += sens.X[k].transpose() * dl_dx[k];
          const Eigen::VectorXd g_raw =
              mapping.jacobian_diag(raw).cwiseProduct(g_theta);
          const WeightNet::Grads grads = net.backward(cache, g_raw);
          Eigen::VectorXd flat = net.flatten();
          adam->step(flat, flatten_grads(grads));
          net.unflatten(flat);
        } catch (const IllConditionedRecursion&) {
          ++stats.skipped_updates;
        }
      } else {
        ++stats.skipped_updates;
      }
    }

    const AugmentedState terminal = sol.states.back();
    RigidBodyState ctrl_state = plant;  // attitude and rates from the onboard loop
    ctrl_state.p = terminal.p;
    ctrl_state.v = terminal.v;
    Disturbance dist_est;
    dist_est.force = terminal.f_dist;
    const ThrustMoment tm = lee_control(ctrl_state, setpoint, cfg.control, cfg.params, dist_est);
    const Vec4 motors =
        saturate_motors(mixer.mix(tm), cfg.harness.motor_min_n, cfg.harness.motor_max_n);
    const ThrustMoment applied = mixer.unmix(motors);
    last_u = (applied.f / cfg.params.mass) * plant.R.col(2);

    const double ape = (plant.p - setpoint.x_d).norm();
    ape_sq_sum += ape * ape;
    stats.max_ape = std::max(stats.max_ape, ape);

    // The flow covers only part of the line; entering it mid-flight gives
    // the abrupt-onset transient the estimator has to handle.
    const WindContext& active = in_flow ? setup.ctx : cfg.contexts.at(0);
    const Disturbance wind = wind_disturbance(active, time, wind_seed);
    plant = step_dynamics(plant, motors, wind, cfg.params, dt);
  }

  stats.steps = steps;
  stats.mean_loss = loss_sum / steps;
  stats.rmse_ape = std::sqrt(ape_sq_sum / steps);
  return stats;
}

EpisodeStats train_episode(WeightNet& net, const ThetaMapping& mapping, AdamOptimizer& adam,
                           const EpisodeSetup& setup, std::uint64_t seed) {
  return run_closed_loop_episode(net, mapping, &adam, setup, seed, true);
}

TrainRunResult train_to_convergence(const EpisodeSetup& setup, std::uint64_t seed) {
  const FullConfig& cfg = *setup.cfg;
  TrainRunResult result;
  result.net = WeightNet::initialize(seed, default_output_bias(cfg), cfg.net.init_scale);
  AdamOptimizer adam(result.net.parameter_count(), cfg.train.learning_rate, cfg.train.beta1,
                     cfg.train.beta2, cfg.train.adam_eps);

  // One epoch sweeps a fixed set of seeded flight samples; the convergence
  // rule compares successive epoch means over the same data.
  const int samples = std::max(1, cfg.train.samples_per_context);
  double prev_loss = 0.0;
  bool converged = false;
  int skipped = 0;
  int episodes = 0;
  std::vector<double> history;
  for (int e = 0; e < cfg.train.max_episodes; ++e) {
    double epoch_loss = 0.0;
    for (int j = 0; j < samples; ++j) {
      const EpisodeStats s = train_episode(result.net, result.mapping, adam, setup,
                                           mix_seed(seed, seed_tag::kEpisode, j));
      epoch_loss += s.mean_loss;
      skipped += s.skipped_updates;
    }
    epoch_loss /= samples;
    history.push_back(epoch_loss);
    ++episodes;
    if (std::abs(epoch_loss - prev_loss) < cfg.train.convergence_threshold) {
      converged = true;
      break;
    }
    prev_loss = epoch_loss;
  }

  result.metadata.context_id = context_id(setup.ctx.direction_code, setup.ctx.speed_level);
  result.metadata.seed = seed;
  result.metadata.loss_history = history;
  result.metadata.converged = converged;
  result.metadata.episodes = episodes;
  result.metadata.skipped_updates = skipped;
  return result;
}

EpisodeStats eval_episode(const WeightNet& net, const ThetaMapping& mapping,
                          const EpisodeSetup& setup, std::uint64_t seed) {
  WeightNet copy = net;
  return run_closed_loop_episode(copy, mapping, nullptr, setup, seed, false);
}

EpisodeStats eval_episode_ekf(const EpisodeSetup& setup, std::uint64_t seed) {
  const FullConfig& cfg = *setup.cfg;
  const double dt = cfg.mhe.dt;
  const int steps = setup.steps_override > 0 ? setup.steps_override : cfg.train.episode_steps;
  const MotorMixer mixer(cfg.params);
  const MheModel model{dt, cfg.params.mass, cfg.params.gravity};

  RigidBodyState plant;
  plant.p = setup.traj.at(0.0).x_d;
  AugmentedState est{plant.p, plant.v, Vec3::Zero()};
  Eigen::Matrix<double, 9, 9> cov = cfg.ekf.p0_cov_diag.asDiagonal();
  Vec3 last_u = Vec3::Zero();
  const std::uint64_t wind_seed = mix_seed(seed, seed_tag::kWind);

  EpisodeStats stats;
  double ape_sq_sum = 0.0;
  for (int t = 0; t < steps; ++t) {
    const double time = t * dt;
    const ReferencePoint setpoint = setup.traj.at(time);
    const Measurement y =
        measure(plant, cfg.harness.meas_noise_std, mix_seed(seed, seed_tag::kMeasure, t), time);
    const auto [next, next_cov] = ekf_estimate(est, cov, last_u, y, cfg.ekf, model);
    est = next;
    cov = next_cov;

    RigidBodyState ctrl_state = plant;
    ctrl_state.p = est.p;
    ctrl_state.v = est.v;
    // Disturbance-unaware baseline: no feedforward of the estimate.
    const ThrustMoment tm =
        lee_control(ctrl_state, setpoint, cfg.control, cfg.params, Disturbance{});
    const Vec4 motors =
        saturate_motors(mixer.mix(tm), cfg.harness.motor_min_n, cfg.harness.motor_max_n);
    const ThrustMoment applied = mixer.unmix(motors);
    last_u = (applied.f / cfg.params.mass) * plant.R.col(2);

    const double ape = (plant.p - setpoint.x_d).norm();
    ape_sq_sum += ape * ape;
    stats.max_ape = std::max(stats.max_ape, ape);

    const bool in_flow = plant.p.x() >= cfg.harness.wind_onset_x &&
                         plant.p.x() <= cfg.harness.wind_exit_x;
    const WindContext& active = in_flow ? setup.ctx : cfg.contexts.at(0);
    plant = step_dynamics(plant, motors, wind_disturbance(active, time, wind_seed),
                          cfg.params, dt);
  }
  stats.steps = steps;
  stats.rmse_ape = std::sqrt(ape_sq_sum / steps);
  return stats;
}

Trajectory SimContextBackend::training_trajectory() const {
  const double h = cfg_.harness.rise_height;
  return Trajectory::line(Vec3(-0.6, 0.0, h), Vec3(0.6, 0.0, h), cfg_.harness.traj_speed);
}

TrainedModel SimContextBackend::train(int ctx_id, std::uint64_t seed) {
  EpisodeSetup setup;
  setup.cfg = &cfg_;
  setup.ctx = cfg_.contexts.at(ctx_id);
  setup.traj = training_trajectory();
  TrainRunResult run = train_to_convergence(setup, seed);
  TrainedModel model;
  model.net = std::move(run.net);
  model.mapping = run.mapping;
  model.metadata = run.metadata;
  return model;
}

std::vector<double> SimContextBackend::evaluate(const TrainedModel& model, std::uint64_t seed) {
  std::vector<double> losses;
  losses.reserve(cfg_.contexts.size());
  const Trajectory traj = training_trajectory();
  for (std::size_t i = 0; i < cfg_.contexts.size(); ++i) {
    EpisodeSetup setup;
    setup.cfg = &cfg_;
    setup.ctx = cfg_.contexts[i];
    setup.traj = traj;
    setup.steps_override = static_cast<int>(std::ceil(traj.duration() / cfg_.mhe.dt));
    const EpisodeStats s =
        eval_episode(model.net, model.mapping, setup, mix_seed(seed, seed_tag::kEval, i));
    losses.push_back(s.mean_loss);
  }
  return losses;
}

// ---------------------------------------------------------------------------

ThetaGradcheckReport run_theta_gradcheck(const FullConfig& cfg, int instances,
                                         std::uint64_t seed, double tol, double fd_step) {
  const auto start = std::chrono::steady_clock::now();
  const MheModel model{cfg.mhe.dt, cfg.params.mass, cfg.params.gravity};
  const int n = 9, m = 6;
  const int L = cfg.mhe.horizon + 1;
  const int p = 2 * n + m + 1;

  ThetaGradcheckReport report;
  report.rows.resize(p);
  for (int i = 0; i < p; ++i) report.rows[i].component = i;
  report.instances = instances;

  Rng rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> wdist(0.5, 5.0);
  std::uniform_real_distribution<double> gdist(0.6, 1.0);

  for (int inst = 0; inst < instances; ++inst) {
    LinearGaussianWindow w;
    w.A = model.a_matrix();
    w.H = model.h_matrix();
    Vec9 x0;
    for (int i = 0; i < 9; ++i) x0(i) = 0.3 * gauss(rng);
    w.xbar = x0 + 0.05 * Vec9::NullaryExpr([&]() { return gauss(rng); });

    // Model rollout with process and measurement noise keeps residuals sane.
    Eigen::VectorXd x = x0;
    for (int k = 0; k < L; ++k) {
      Eigen::VectorXd yk = w.H * x;
      for (int i = 0; i < 6; ++i) yk(i) += 0.02 * gauss(rng);
      w.y.push_back(yk);
      if (k + 1 < L) {
        const Vec3 u(2.0 * gauss(rng), 2.0 * gauss(rng), 2.0 * gauss(rng));
        const Vec9 b = model.input_offset(u);
        w.b.push_back(b);
        Eigen::VectorXd noise(9);
        for (int i = 0; i < 9; ++i) noise(i) = 0.01 * gauss(rng);
        x = w.A * x + b + noise;
      }
    }

    GenericWeights weights;
    weights.p_diag = Eigen::VectorXd::NullaryExpr(n, [&]() { return wdist(rng); });
    weights.r_diag = Eigen::VectorXd::NullaryExpr(m, [&]() { return wdist(rng); });
    weights.q_diag = Eigen::VectorXd::NullaryExpr(n, [&]() { return wdist(rng); });
    weights.gamma = gdist(rng);

    const GenericMheSolution sol = solve_linear_mhe(w, weights);
    const SensitivityBundle bundle = build_sensitivity_bundle(w, weights, sol);
    const SensitivitySolution sens = kf_sensitivity(bundle, cfg.mhe.cond_limit);
    const std::vector<Eigen::MatrixXd> fd = fd_sensitivity(w, weights, fd_step);

    for (int i = 0; i < p; ++i) {
      double num = 0.0, den = 0.0;
      for (int k = 0; k < L; ++k) {
        num = std::max(num, (sens.X[k].col(i) - fd[k].col(i)).cwiseAbs().maxCoeff());
        den = std::max(den, fd[k].col(i).cwiseAbs().maxCoeff());
      }
      const double rel = num / std::max(den, 1e-8);
      report.rows[i].max_rel_err = std::max(report.rows[i].max_rel_err, rel);
    }
  }

  for (const auto& row : report.rows)
    report.overall_max_rel_err = std::max(report.overall_max_rel_err, row.max_rel_err);
  report.pass = report.overall_max_rel_err < tol;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

struct TeacherRollout {
  std::vector<Vec6> ys;
  std::vector<Vec3> us;
  AugmentedState prior;
  std::vector<ReferencePoint> setpoints;
};

// Plant rollout under a network-independent controller (disturbance-unaware
// Lee on the true state). The gradient check pipeline replays this data.
TeacherRollout make_teacher_rollout(const FullConfig& cfg, const WindContext& ctx,
                                    const Trajectory& traj, int steps, std::uint64_t seed) {
  const MotorMixer mixer(cfg.params);
  const double dt = cfg.mhe.dt;
  RigidBodyState plant;
  plant.p = traj.at(0.0).x_d;
  TeacherRollout out;
  out.prior = AugmentedState{plant.p, plant.v, Vec3::Zero()};
  const std::uint64_t wind_seed = mix_seed(seed, seed_tag::kWind);
  for (int t = 0; t < steps; ++t) {
    const double time = t * dt;
    const ReferencePoint sp = traj.at(time);
    out.setpoints.push_back(sp);
    const Measurement y =
        measure(plant, cfg.harness.meas_noise_std, mix_seed(seed, seed_tag::kMeasure, t), time);
    out.ys.push_back(y.y);
    const ThrustMoment tm = lee_control(plant, sp, cfg.control, cfg.params, Disturbance{});
    const Vec4 motors =
        saturate_motors(mixer.mix(tm), cfg.harness.motor_min_n, cfg.harness.motor_max_n);
    const ThrustMoment applied = mixer.unmix(motors);
    out.us.push_back((applied.f / cfg.params.mass) * plant.R.col(2));
    const Disturbance wind = wind_disturbance(ctx, time, wind_seed);
    plant = step_dynamics(plant, motors, wind, cfg.params, dt);
  }
  return out;
}

// Growing-window replay; returns the total loss and optionally accumulates
// the analytic parameter gradient.
double teacher_forced_loss(const WeightNet& net, const ThetaMapping& mapping,
                           const FullConfig& cfg, const TeacherRollout& data,
                           Eigen::VectorXd* grad_out) {
  const MheModel model{cfg.mhe.dt, cfg.params.mass, cfg.params.gravity};
  const Eigen::Matrix<double, 9, 9> w_loss = cfg.train.loss_weight_diag.asDiagonal();
  const int steps = static_cast<int>(data.ys.size());
  if (cfg.mhe.horizon < steps)
    throw std::invalid_argument("teacher_forced_loss: horizon shorter than the episode");

  HorizonWindow window;
  window.model = model;
  window.horizon = cfg.mhe.horizon;
  window.prior = data.prior;

  MheSolution sol;
  double total = 0.0;
  if (grad_out) grad_out->setZero();
  for (int t = 0; t < steps; ++t) {
    WeightNet::Cache cache;
    const Eigen::VectorXd raw = net.forward_raw(data.ys[t], &cache);
    const MheWeights weights = mapping.map(raw);
    if (t == 0) {
      window.push_initial(data.ys[t]);
    } else {
      Measurement meas;
      meas.y = data.ys[t];
      window = slide_window(window, meas, data.us[t - 1], sol);
    }
    sol = solve_mhe(window, weights);

    std::vector<AugmentedState> refs(window.length());
    for (int k = 0; k < window.length(); ++k) {
      const ReferencePoint& rp = data.setpoints[window.start_step + k];
      refs[k].p = rp.x_d;
      refs[k].v = rp.v_d;
    }
    total += tracking_loss(sol, refs, w_loss, cfg.train.squared_norm_loss);

    if (grad_out) {
      const SensitivitySolution sens = mhe_sensitivity(window, weights, sol, cfg.mhe.cond_limit);
      const std::vector<Vec9> dl_dx =
          tracking_loss_gradient(sol, refs, w_loss, cfg.train.squared_norm_loss);
      Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(25);
      for (int k = 0; k < window.length(); ++k) g_theta += sens.X[k].transpose() * dl_dx[k];
      const Eigen::VectorXd g_raw = mapping.jacobian_diag(raw).cwiseProduct(g_theta);
      *grad_out += flatten_grads(net.backward(cache, g_raw));
    }
  }
  return total;
}

}  // namespace

EndToEndGradcheckReport run_end_to_end_gradcheck(const FullConfig& cfg, int episode_steps,
                                                 int n_params, std::uint64_t seed, double tol,
                                                 double fd_step) {
  FullConfig local = cfg;
  local.net.feature_mode = FeatureMode::kRawMeasurement;
  // Exercise every block of the chain regardless of the configured objective.
  local.train.loss_weight_diag << 1, 1, 1, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5;
  local.train.squared_norm_loss = false;

  const WindContext ctx = local.contexts.at(context_id(3, 1));
  const Trajectory traj = Trajectory::line(Vec3(-0.6, 0, 0.5), Vec3(0.6, 0, 0.5),
                                           local.harness.traj_speed);
  const TeacherRollout data =
      make_teacher_rollout(local, ctx, traj, episode_steps, mix_seed(seed, seed_tag::kEpisode));

  ThetaMapping mapping;
  WeightNet net = WeightNet::initialize(seed, default_output_bias(local), local.net.init_scale);

  Eigen::VectorXd analytic(net.parameter_count());
  teacher_forced_loss(net, mapping, local, data, &analytic);

  Rng rng(mix_seed(seed, 0x777));
  std::uniform_int_distribution<int> pick(0, net.parameter_count() - 1);
  EndToEndGradcheckReport report;
  report.parameters_checked = n_params;

  Eigen::VectorXd params = net.flatten();
  for (int s = 0; s < n_params; ++s) {
    const int idx = pick(rng);
    const double h = fd_step * std::max(1.0, std::abs(params(idx)));
    WeightNet perturbed = net;
    Eigen::VectorXd p2 = params;
    p2(idx) = params(idx) + h;
    perturbed.unflatten(p2);
    const double lp = teacher_forced_loss(perturbed, mapping, local, data, nullptr);
    p2(idx) = params(idx) - h;
    perturbed.unflatten(p2);
    const double lm = teacher_forced_loss(perturbed, mapping, local, data, nullptr);
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::abs(analytic(idx) - fd) / std::max(std::abs(fd), 1e-8);
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace ctxmhe
