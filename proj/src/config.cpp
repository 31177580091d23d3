#include "ctxmhe/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ctxmhe {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <typename VecT>
VecT vec_from_json(const json& j) {
  VecT v;
  if (static_cast<Eigen::Index>(j.size()) != v.size())
    throw std::invalid_argument("config: vector length mismatch");
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

FullConfig FullConfig::defaults() {
  FullConfig cfg;
  cfg.contexts = all_wind_contexts(cfg.wind);
  return cfg;
}

std::string FullConfig::to_json() const {
  json j;
  j["params"] = {{"mass_kg", params.mass},
                 {"inertia_diag_kgm2", vec_to_json(params.inertia_diag)},
                 {"arm_length_m", params.arm_length},
                 {"torque_coeff", params.torque_coeff},
                 {"gravity_mps2", params.gravity}};
  j["control"] = {{"k_x", control.k_x},
                  {"k_v", control.k_v},
                  {"k_r", control.k_r},
                  {"k_omega", control.k_omega}};
  json ctxs = json::array();
  for (const auto& c : contexts) {
    ctxs.push_back({{"direction", c.direction_code},
                    {"level", c.speed_level},
                    {"mean_force_n", vec_to_json(c.mean_force)},
                    {"turbulence_std_n", c.turbulence_std},
                    {"torque_scale", c.torque_scale}});
  }
  j["wind"] = {{"low_force_n", wind.low_force_n},
               {"high_force_n", wind.high_force_n},
               {"turbulence_std_n", wind.turbulence_std_n},
               {"torque_scale", wind.torque_scale},
               {"contexts", ctxs}};
  j["mhe"] = {{"horizon", mhe.horizon},
              {"dt", mhe.dt},
              {"max_iterations", mhe.max_iterations},
              {"rel_cost_tol", mhe.rel_cost_tol},
              {"cond_limit", mhe.cond_limit}};
  j["ekf"] = {{"q_cov_diag", vec_to_json(ekf.q_cov_diag)},
              {"r_cov_diag", vec_to_json(ekf.r_cov_diag)},
              {"p0_cov_diag", vec_to_json(ekf.p0_cov_diag)}};
  j["net"] = {{"init_scale", net.init_scale},
              {"feature_mode",
               net.feature_mode == FeatureMode::kInnovation ? "innovation" : "raw_measurement"},
              {"weight_scale", net.weight_scale},
              {"gamma_bias", net.gamma_bias}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"adam_eps", train.adam_eps},
                {"convergence_threshold", train.convergence_threshold},
                {"max_episodes", train.max_episodes},
                {"episode_steps", train.episode_steps},
                {"samples_per_context", train.samples_per_context},
                {"loss_weight_diag", vec_to_json(train.loss_weight_diag)},
                {"squared_norm_loss", train.squared_norm_loss},
                {"supervised_disturbance", train.supervised_disturbance},
                {"eval_loss_weight_diag", vec_to_json(train.eval_loss_weight_diag)},
                {"eval_squared_norm_loss", train.eval_squared_norm_loss}};
  j["gp"] = {{"length_scale", gp.length_scale},
             {"signal_variance", gp.signal_variance},
             {"noise_variance", gp.noise_variance},
             {"prior_mean", gp.prior_mean},
             {"cond_limit", gp.cond_limit},
             {"max_jitter", gp.max_jitter}};
  j["selection"] = {{"beta", selection.beta},
                    {"gap_alpha", selection.gap_alpha},
                    {"no_model_floor", selection.no_model_floor}};
  j["harness"] = {{"meas_noise_std", vec_to_json(harness.meas_noise_std)},
                  {"wind_onset_x", harness.wind_onset_x},
                  {"wind_exit_x", harness.wind_exit_x},
                  {"motor_min_n", harness.motor_min_n},
                  {"motor_max_n", harness.motor_max_n},
                  {"traj_speed", harness.traj_speed},
                  {"rise_height", harness.rise_height},
                  {"hover_hold_s", harness.hover_hold_s},
                  {"no_wind_margin", harness.no_wind_margin},
                  {"suite_runs_per_cell", harness.suite_runs_per_cell},
                  {"suite_workers", harness.suite_workers},
                  {"seeds", harness.seeds}};
  return j.dump(2);
}

FullConfig FullConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  FullConfig cfg = FullConfig::defaults();
  if (j.contains("params")) {
    const auto& p = j.at("params");
    maybe(p, "mass_kg", cfg.params.mass);
    if (p.contains("inertia_diag_kgm2"))
      cfg.params.inertia_diag = vec_from_json<Vec3>(p.at("inertia_diag_kgm2"));
    maybe(p, "arm_length_m", cfg.params.arm_length);
    maybe(p, "torque_coeff", cfg.params.torque_coeff);
    maybe(p, "gravity_mps2", cfg.params.gravity);
    cfg.params.validate();
  }
  if (j.contains("control")) {
    const auto& c = j.at("control");
    maybe(c, "k_x", cfg.control.k_x);
    maybe(c, "k_v", cfg.control.k_v);
    maybe(c, "k_r", cfg.control.k_r);
    maybe(c, "k_omega", cfg.control.k_omega);
    cfg.control.validate();
  }
  if (j.contains("wind")) {
    const auto& w = j.at("wind");
    maybe(w, "low_force_n", cfg.wind.low_force_n);
    maybe(w, "high_force_n", cfg.wind.high_force_n);
    maybe(w, "turbulence_std_n", cfg.wind.turbulence_std_n);
    maybe(w, "torque_scale", cfg.wind.torque_scale);
    cfg.contexts = all_wind_contexts(cfg.wind);
    if (w.contains("contexts")) {
      cfg.contexts.clear();
      for (const auto& cj : w.at("contexts")) {
        WindContext ctx = make_wind_context(cj.at("direction").get<int>(),
                                            cj.at("level").get<int>(), cfg.wind);
        if (cj.contains("mean_force_n")) ctx.mean_force = vec_from_json<Vec3>(cj.at("mean_force_n"));
        if (cj.contains("turbulence_std_n"))
          ctx.turbulence_std = cj.at("turbulence_std_n").get<double>();
        if (cj.contains("torque_scale")) ctx.torque_scale = cj.at("torque_scale").get<double>();
        ctx.validate();
        cfg.contexts.push_back(ctx);
      }
    }
  }
  if (j.contains("mhe")) {
    const auto& m = j.at("mhe");
    maybe(m, "horizon", cfg.mhe.horizon);
    maybe(m, "dt", cfg.mhe.dt);
    maybe(m, "max_iterations", cfg.mhe.max_iterations);
    maybe(m, "rel_cost_tol", cfg.mhe.rel_cost_tol);
    maybe(m, "cond_limit", cfg.mhe.cond_limit);
  }
  if (j.contains("ekf")) {
    const auto& e = j.at("ekf");
    if (e.contains("q_cov_diag")) cfg.ekf.q_cov_diag = vec_from_json<Vec9>(e.at("q_cov_diag"));
    if (e.contains("r_cov_diag")) cfg.ekf.r_cov_diag = vec_from_json<Vec6>(e.at("r_cov_diag"));
    if (e.contains("p0_cov_diag")) cfg.ekf.p0_cov_diag = vec_from_json<Vec9>(e.at("p0_cov_diag"));
  }
  if (j.contains("net")) {
    const auto& n = j.at("net");
    maybe(n, "init_scale", cfg.net.init_scale);
    if (n.contains("feature_mode")) {
      const std::string mode = n.at("feature_mode").get<std::string>();
      if (mode == "innovation") {
        cfg.net.feature_mode = FeatureMode::kInnovation;
      } else if (mode == "raw_measurement") {
        cfg.net.feature_mode = FeatureMode::kRawMeasurement;
      } else {
        throw std::invalid_argument("config: unknown feature_mode " + mode);
      }
    }
    maybe(n, "weight_scale", cfg.net.weight_scale);
    maybe(n, "gamma_bias", cfg.net.gamma_bias);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "learning_rate", cfg.train.learning_rate);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    maybe(t, "convergence_threshold", cfg.train.convergence_threshold);
    maybe(t, "max_episodes", cfg.train.max_episodes);
    maybe(t, "episode_steps", cfg.train.episode_steps);
    maybe(t, "samples_per_context", cfg.train.samples_per_context);
    if (t.contains("loss_weight_diag"))
      cfg.train.loss_weight_diag = vec_from_json<Vec9>(t.at("loss_weight_diag"));
    maybe(t, "squared_norm_loss", cfg.train.squared_norm_loss);
    maybe(t, "supervised_disturbance", cfg.train.supervised_disturbance);
    if (t.contains("eval_loss_weight_diag"))
      cfg.train.eval_loss_weight_diag = vec_from_json<Vec9>(t.at("eval_loss_weight_diag"));
    maybe(t, "eval_squared_norm_loss", cfg.train.eval_squared_norm_loss);
  }
  if (j.contains("gp")) {
    const auto& g = j.at("gp");
    maybe(g, "length_scale", cfg.gp.length_scale);
    maybe(g, "signal_variance", cfg.gp.signal_variance);
    maybe(g, "noise_variance", cfg.gp.noise_variance);
    maybe(g, "prior_mean", cfg.gp.prior_mean);
    maybe(g, "cond_limit", cfg.gp.cond_limit);
    maybe(g, "max_jitter", cfg.gp.max_jitter);
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    maybe(s, "beta", cfg.selection.beta);
    maybe(s, "gap_alpha", cfg.selection.gap_alpha);
    maybe(s, "no_model_floor", cfg.selection.no_model_floor);
  }
  if (j.contains("harness")) {
    const auto& h = j.at("harness");
    if (h.contains("meas_noise_std"))
      cfg.harness.meas_noise_std = vec_from_json<Vec6>(h.at("meas_noise_std"));
    maybe(h, "wind_onset_x", cfg.harness.wind_onset_x);
    maybe(h, "wind_exit_x", cfg.harness.wind_exit_x);
    maybe(h, "motor_min_n", cfg.harness.motor_min_n);
    maybe(h, "motor_max_n", cfg.harness.motor_max_n);
    maybe(h, "traj_speed", cfg.harness.traj_speed);
    maybe(h, "rise_height", cfg.harness.rise_height);
    maybe(h, "hover_hold_s", cfg.harness.hover_hold_s);
    maybe(h, "no_wind_margin", cfg.harness.no_wind_margin);
    maybe(h, "suite_runs_per_cell", cfg.harness.suite_runs_per_cell);
    maybe(h, "suite_workers", cfg.harness.suite_workers);
    if (h.contains("seeds")) cfg.harness.seeds = h.at("seeds").get<std::vector<std::uint64_t>>();
  }
  return cfg;
}

FullConfig FullConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void FullConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  f << to_json();
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t FullConfig::hash() const { return fnv1a(to_json()); }

}  // namespace ctxmhe
