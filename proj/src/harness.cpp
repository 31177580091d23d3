#include "ctxmhe/harness.hpp"

#include <chrono>
#include <thread>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "ctxmhe/csvio.hpp"
#include "ctxmhe/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ctxmhe {

const char* controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kBaseEkf: return "base";
    case ControllerKind::kOneContext: return "one";
    case ControllerKind::kKContext: return "budget";
    case ControllerKind::kFullContext: return "full";
  }
  return "unknown";
}

ControllerKind controller_from_name(const std::string& name) {
  if (name == "base") return ControllerKind::kBaseEkf;
  if (name == "one") return ControllerKind::kOneContext;
  if (name == "budget") return ControllerKind::kKContext;
  if (name == "full") return ControllerKind::kFullContext;
  throw std::invalid_argument("unknown controller: " + name);
}

ModelSet make_model_set(const ContextualLearningResult& result) {
  ModelSet set{result.models, result.table, result.trained_ctx_ids, -1};
  if (!result.table.empty()) {
    int best = 0;
    for (int i = 1; i < result.table.models(); ++i) {
      if (result.table.mean_loss_of_model(i) < result.table.mean_loss_of_model(best)) best = i;
    }
    set.one_context_choice = best;
  }
  return set;
}

void save_model_set(const ModelSet& set, const std::vector<SelectionStep>& trace,
                    const std::vector<WindContext>& pool, const std::string& dir,
                    std::uint64_t config_hash) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["budget"] = static_cast<int>(set.models.size());
  manifest["trained_ctx_ids"] = set.trained_ctx_ids;
  manifest["one_context_choice"] = set.one_context_choice;
  manifest["config_hash"] = config_hash;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < set.models.size(); ++i) {
    const std::string name =
        "model_" + std::to_string(i) + "_ctx" + std::to_string(set.trained_ctx_ids[i]) + ".json";
    Checkpoint ckpt{set.models[i].net, set.models[i].mapping, set.models[i].metadata};
    save_checkpoint(ckpt, dir + "/" + name);
    files.push_back(name);
  }
  manifest["model_files"] = files;
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2);

  std::ofstream tf(dir + "/performance_table.csv", std::ios::binary);
  tf << set.table.to_csv();

  if (!trace.empty()) {
    ContextualLearningResult shim{{}, set.trained_ctx_ids, set.table, trace};
    std::ofstream sf(dir + "/selection_trace.json");
    sf << selection_trace_to_json(shim, pool);
  }
}

ModelSet load_model_set(const std::string& dir, const std::vector<WindContext>& pool) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("load_model_set: no manifest in " + dir);
  nlohmann::json manifest;
  mf >> manifest;

  std::vector<ContextPoint> points;
  for (const auto& ctx : pool) points.push_back(context_point(ctx));
  ModelSet set{{}, PerformanceTable(points), {}, -1};
  set.trained_ctx_ids = manifest.at("trained_ctx_ids").get<std::vector<int>>();
  set.one_context_choice = manifest.at("one_context_choice").get<int>();
  for (const auto& name : manifest.at("model_files")) {
    const Checkpoint ckpt = load_checkpoint(dir + "/" + name.get<std::string>());
    set.models.push_back(TrainedModel{ckpt.net, ckpt.mapping, ckpt.metadata});
  }

  const CsvTable table_csv = read_csv(dir + "/performance_table.csv");
  if (table_csv.header.size() != points.size() + 1)
    throw std::runtime_error("load_model_set: performance table width mismatch");
  for (const auto& row : table_csv.rows) {
    std::vector<double> losses;
    for (std::size_t i = 1; i < row.size(); ++i) losses.push_back(std::stod(row[i]));
    set.table.add_model_row(losses);
  }
  return set;
}

namespace {

struct MheDumpSink {
  std::string* out = nullptr;
  bool wrote_header = false;

  void dump(int step, const HorizonWindow& window, const MheSolution& sol) {
    if (!out) return;
    std::ostringstream s;
    if (!wrote_header) {
      s << "step,k,px,py,pz,vx,vy,vz,fx,fy,fz,w0,w1,w2,w3,w4,w5,w6,w7,w8,"
           "y0,y1,y2,y3,y4,y5,J\n";
      wrote_header = true;
    }
    for (int k = 0; k < window.length(); ++k) {
      const Vec9 x = sol.states[k].to_vec();
      s << step << ',' << k;
      for (int i = 0; i < 9; ++i) s << ',' << format_double(x(i));
      for (int i = 0; i < 9; ++i)
        s << ',' << format_double(k + 1 < window.length() ? sol.noises[k](i) : 0.0);
      for (int i = 0; i < 6; ++i) s << ',' << format_double(window.y[k](i));
      s << ',' << format_double(sol.cost) << '\n';
    }
    *out += s.str();
  }
};

}  // namespace

RunRecord run_episode(const Environment& env, const Trajectory& traj, ControllerKind kind,
                      const ModelSet* models, std::uint64_t seed, const FullConfig& cfg,
                      std::string* mhe_dump) {
  const bool is_mhe = kind != ControllerKind::kBaseEkf;
  if (is_mhe && (models == nullptr || models->models.empty()))
    throw std::invalid_argument("run_episode: controller requires trained models");
  if (kind == ControllerKind::kOneContext && models->one_context_choice < 0)
    throw std::invalid_argument("run_episode: one-context choice missing");

  const double dt = cfg.mhe.dt;
  const int steps = static_cast<int>(std::ceil(traj.duration() / dt));
  const MotorMixer mixer(cfg.params);
  const MheModel model{dt, cfg.params.mass, cfg.params.gravity};
  MheSolverOptions solver_opts;
  solver_opts.max_iterations = cfg.mhe.max_iterations;
  solver_opts.rel_cost_tol = cfg.mhe.rel_cost_tol;

  RunRecord record;
  record.controller = controller_name(kind);
  record.env_id = env.id;
  record.env_name = env.name;
  record.traj_name = Trajectory::kind_name(traj.kind());
  record.seed = seed;
  record.config_hash = cfg.hash();

  RigidBodyState plant;
  plant.p = traj.at(0.0).x_d;

  // Estimator state.
  KalmanBelief belief;
  belief.x = AugmentedState{plant.p, plant.v, Vec3::Zero()}.to_vec();
  belief.cov = Eigen::MatrixXd(cfg.ekf.p0_cov_diag.asDiagonal());
  HorizonWindow window;
  window.model = model;
  window.horizon = cfg.mhe.horizon;
  window.prior = AugmentedState{plant.p, plant.v, Vec3::Zero()};
  MheSolution sol;
  bool have_sol = false;

  int model_id = kind == ControllerKind::kOneContext && models ? models->one_context_choice : -1;
  int current_ctx = -1;
  Vec3 last_u = Vec3::Zero();
  const std::uint64_t wind_seed = mix_seed(seed, seed_tag::kWind);
  MheDumpSink dump{mhe_dump, false};

  for (int t = 0; t < steps; ++t) {
    const double time = t * dt;
    const ReferencePoint setpoint = traj.at(time);
    const int ctx = env.active_context(plant.p);
    if (ctx != current_ctx) {
      current_ctx = ctx;
      if (kind == ControllerKind::kKContext || kind == ControllerKind::kFullContext) {
        model_id = select_model_at_test(models->table, context_point(cfg.contexts.at(ctx)));
      }
    }

    const Measurement y =
        measure(plant, cfg.harness.meas_noise_std, mix_seed(seed, seed_tag::kMeasure, t), time);

    StepRow row;
    row.t = time;
    row.setpoint = setpoint.x_d;
    row.p = plant.p;
    row.v = plant.v;
    row.ctx_id = ctx;
    row.model_id = is_mhe ? model_id : -1;
    row.theta = Eigen::VectorXd::Zero(25);

    AugmentedState estimate;
    Disturbance dist_est;
    if (!is_mhe) {
      const auto [est, cov] = ekf_estimate(AugmentedState::from_vec(belief.x), belief.cov,
                                           last_u, y, cfg.ekf, model);
      belief.x = est.to_vec();
      belief.cov = cov;
      estimate = est;
      // Disturbance-unaware baseline: estimate exists but is not fed forward.
    } else {
      const TrainedModel& active = models->models.at(model_id);
      Vec6 features = Vec6::Zero();
      if (cfg.net.feature_mode == FeatureMode::kRawMeasurement) {
        features = y.y;
      } else if (have_sol) {
        features = innovation_features(model, sol.states.back(), last_u, y.y);
      }
      WeightNet::Cache cache;
      const Eigen::VectorXd raw = active.net.forward_raw(features, &cache);
      const MheWeights weights = active.mapping.map(raw);
      row.theta = weights.theta();
      if (t == 0) {
        window.push_initial(y.y);
      } else {
        window = slide_window(window, y, last_u, sol);
      }
      sol = solve_mhe(window, weights, solver_opts);
      have_sol = true;
      estimate = sol.states.back();
      dist_est.force = estimate.f_dist;
      dump.dump(t, window, sol);
    }
    row.estimate = estimate.to_vec();

    RigidBodyState ctrl_state = plant;
    ctrl_state.p = estimate.p;
    ctrl_state.v = estimate.v;
    ThrustMoment tm;
    try {
      tm = lee_control(ctrl_state, setpoint, cfg.control, cfg.params, dist_est);
    } catch (const std::exception& e) {
      record.aborted = true;
      record.abort_reason = e.what();
      record.rows.push_back(row);
      break;
    }
    const Vec4 motors =
        saturate_motors(mixer.mix(tm), cfg.harness.motor_min_n, cfg.harness.motor_max_n);
    const ThrustMoment applied = mixer.unmix(motors);
    last_u = (applied.f / cfg.params.mass) * plant.R.col(2);
    row.f_cmd = applied.f;
    row.moment = applied.moment;

    const Disturbance wind = wind_disturbance(cfg.contexts.at(ctx), time, wind_seed);
    row.true_force = wind.force;
    row.true_torque = wind.torque;
    record.rows.push_back(row);

    plant = step_dynamics(plant, motors, wind, cfg.params, dt);
    if (!plant.finite()) {
      record.aborted = true;
      record.abort_reason = "non-finite plant state at t=" + std::to_string(time);
      break;
    }
  }
  return record;
}

Metrics compute_metrics(const RunRecord& record) {
  if (record.rows.empty()) throw std::invalid_argument("compute_metrics: empty record");
  Metrics m;
  m.ape.reserve(record.rows.size());
  double sq = 0.0;
  for (const auto& row : record.rows) {
    const double ape = (row.p - row.setpoint).norm();
    m.ape.push_back(ape);
    sq += ape * ape;
    m.max_ape = std::max(m.max_ape, ape);
  }
  m.rmse_ape = std::sqrt(sq / static_cast<double>(m.ape.size()));
  return m;
}

std::string run_record_to_csv(const RunRecord& record) {
  std::vector<std::string> header = {"t",  "set_x", "set_y", "set_z", "px", "py", "pz",
                                     "vx", "vy",    "vz"};
  const char* est_names[9] = {"est_px", "est_py", "est_pz", "est_vx", "est_vy",
                              "est_vz", "est_fx", "est_fy", "est_fz"};
  for (const auto* n : est_names) header.push_back(n);
  for (int i = 0; i < 25; ++i) header.push_back("theta_" + std::to_string(i));
  header.insert(header.end(), {"ctx_id", "model_id", "f_cmd", "mx", "my", "mz", "true_fx",
                               "true_fy", "true_fz", "true_taux", "true_tauy", "true_tauz"});
  CsvWriter csv(header);
  for (const auto& r : record.rows) {
    std::vector<std::string> cells;
    cells.push_back(format_double(r.t));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.setpoint(i)));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.p(i)));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.v(i)));
    for (int i = 0; i < 9; ++i) cells.push_back(format_double(r.estimate(i)));
    for (int i = 0; i < 25; ++i) cells.push_back(format_double(r.theta(i)));
    cells.push_back(std::to_string(r.ctx_id));
    cells.push_back(std::to_string(r.model_id));
    cells.push_back(format_double(r.f_cmd));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.moment(i)));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.true_force(i)));
    for (int i = 0; i < 3; ++i) cells.push_back(format_double(r.true_torque(i)));
    csv.add_row(cells);
  }
  return csv.str();
}

std::string run_record_metadata_json(const RunRecord& record) {
  nlohmann::json j;
  j["controller"] = record.controller;
  j["env_id"] = record.env_id;
  j["env_name"] = record.env_name;
  j["trajectory"] = record.traj_name;
  j["corner"] = record.corner;
  j["seed"] = record.seed;
  j["config_hash"] = record.config_hash;
  j["steps"] = record.rows.size();
  j["aborted"] = record.aborted;
  j["abort_reason"] = record.abort_reason;
  return j.dump(2);
}

RunRecord run_record_from_csv(const std::string& csv_text, const std::string& meta_json) {
  RunRecord record;
  const nlohmann::json meta = nlohmann::json::parse(meta_json);
  record.controller = meta.at("controller").get<std::string>();
  record.env_id = meta.at("env_id").get<int>();
  record.env_name = meta.at("env_name").get<std::string>();
  record.traj_name = meta.at("trajectory").get<std::string>();
  record.corner = meta.at("corner").get<int>();
  record.seed = meta.at("seed").get<std::uint64_t>();
  record.config_hash = meta.at("config_hash").get<std::uint64_t>();
  record.aborted = meta.at("aborted").get<bool>();

  std::stringstream ss(csv_text);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;
    }
    std::vector<double> vals;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 56) throw std::runtime_error("run_record_from_csv: short row");
    StepRow r;
    int off = 0;
    r.t = vals[off++];
    for (int i = 0; i < 3; ++i) r.setpoint(i) = vals[off++];
    for (int i = 0; i < 3; ++i) r.p(i) = vals[off++];
    for (int i = 0; i < 3; ++i) r.v(i) = vals[off++];
    for (int i = 0; i < 9; ++i) r.estimate(i) = vals[off++];
    r.theta = Eigen::VectorXd::Zero(25);
    for (int i = 0; i < 25; ++i) r.theta(i) = vals[off++];
    r.ctx_id = static_cast<int>(vals[off++]);
    r.model_id = static_cast<int>(vals[off++]);
    r.f_cmd = vals[off++];
    for (int i = 0; i < 3; ++i) r.moment(i) = vals[off++];
    for (int i = 0; i < 3; ++i) r.true_force(i) = vals[off++];
    for (int i = 0; i < 3; ++i) r.true_torque(i) = vals[off++];
    record.rows.push_back(r);
  }
  return record;
}

void save_run_record(const RunRecord& record, const std::string& dir, const std::string& stem) {
  fs::create_directories(dir);
  std::ofstream rf(dir + "/" + stem + ".csv", std::ios::binary);
  rf << run_record_to_csv(record);
  std::ofstream mf(dir + "/" + stem + ".meta.json", std::ios::binary);
  mf << run_record_metadata_json(record);
}

double sign_test_p_value(int successes, int trials) {
  // P(X >= successes) for X ~ Binomial(trials, 1/2).
  double p = 0.0;
  for (int k = successes; k <= trials; ++k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (trials - i) / (i + 1);
    p += c;
  }
  return p * std::pow(0.5, trials);
}

namespace {

std::string run_stem(const std::string& controller, int env_id, const std::string& traj,
                     std::uint64_t seed, int corner) {
  std::string stem = "record_" + controller + "_env" + std::to_string(env_id) + "_" + traj +
                     "_seed" + std::to_string(seed);
  if (corner >= 0) stem += "_c" + std::to_string(corner);
  return stem;
}

}  // namespace

SuiteResult run_suite(const FullConfig& cfg, const std::string& out_dir, bool verbose) {
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/ape_series");

  const std::vector<ControllerKind> kinds = {ControllerKind::kBaseEkf,
                                             ControllerKind::kOneContext,
                                             ControllerKind::kKContext,
                                             ControllerKind::kFullContext};
  const std::vector<Environment> envs = [&] {
    auto e = default_environments();
    for (auto& env : e) env.no_wind_margin = cfg.harness.no_wind_margin;
    return e;
  }();

  const Trajectory line = Trajectory::line(Vec3(-0.6, 0, cfg.harness.rise_height),
                                           Vec3(0.6, 0, cfg.harness.rise_height),
                                           cfg.harness.traj_speed);

  // Per-seed work unit; seeds are independent and merge deterministically.
  struct SeedOutput {
    std::map<std::string, double> pool_rmse, pool_max;
    std::map<std::string, std::vector<double>> cell_rmse, cell_max;
  };

  auto run_seed = [&](std::uint64_t seed) -> SeedOutput {
    SeedOutput out;
    if (verbose) std::cout << "[suite] seed " << seed << ": training models\n";

    SimContextBackend backend(cfg);
    const ContextualLearningResult full_run =
        run_contextual_learning(cfg.contexts, static_cast<int>(cfg.contexts.size()), backend,
                                cfg.gp, cfg.selection, mix_seed(seed, 0xF0));
    const ContextualLearningResult budget_run = run_contextual_learning(
        cfg.contexts, 3, backend, cfg.gp, cfg.selection, mix_seed(seed, 0xB0));

    const ModelSet full_set = make_model_set(full_run);
    const ModelSet budget_set = make_model_set(budget_run);
    save_model_set(full_set, full_run.trace, cfg.contexts,
                   out_dir + "/models_seed" + std::to_string(seed) + "/full", cfg.hash());
    save_model_set(budget_set, budget_run.trace, cfg.contexts,
                   out_dir + "/models_seed" + std::to_string(seed) + "/budget", cfg.hash());

    auto set_for = [&](ControllerKind kind) -> const ModelSet* {
      switch (kind) {
        case ControllerKind::kBaseEkf: return nullptr;
        case ControllerKind::kKContext: return &budget_set;
        default: return &full_set;
      }
    };

    // Pool-averaged evaluation: each context is flown through the wind
    // corridor on the line trajectory, paired seeds across controllers.
    if (verbose) std::cout << "[suite] seed " << seed << ": pool evaluation\n";
    const int reps = std::max(1, cfg.harness.suite_runs_per_cell);
    const int line_steps = static_cast<int>(std::ceil(line.duration() / cfg.mhe.dt));
    for (const auto kind : kinds) {
      double rmse_sum = 0.0, max_sum = 0.0;
      for (std::size_t ci = 0; ci < cfg.contexts.size(); ++ci) {
        EpisodeSetup es;
        es.cfg = &cfg;
        es.ctx = cfg.contexts[ci];
        es.traj = line;
        es.steps_override = line_steps;
        const ContextPoint cpt = context_point(cfg.contexts[ci]);
        for (int rep = 0; rep < reps; ++rep) {
          const std::uint64_t eval_seed = mix_seed(seed, seed_tag::kEval, ci, rep);
          EpisodeStats stats;
          switch (kind) {
            case ControllerKind::kBaseEkf:
              stats = eval_episode_ekf(es, eval_seed);
              break;
            case ControllerKind::kOneContext: {
              const TrainedModel& m = full_set.models.at(full_set.one_context_choice);
              stats = eval_episode(m.net, m.mapping, es, eval_seed);
              break;
            }
            case ControllerKind::kKContext: {
              const TrainedModel& m =
                  budget_set.models.at(select_model_at_test(budget_set.table, cpt));
              stats = eval_episode(m.net, m.mapping, es, eval_seed);
              break;
            }
            case ControllerKind::kFullContext: {
              const TrainedModel& m =
                  full_set.models.at(select_model_at_test(full_set.table, cpt));
              stats = eval_episode(m.net, m.mapping, es, eval_seed);
              break;
            }
          }
          rmse_sum += stats.rmse_ape;
          max_sum += stats.max_ape;
        }
      }
      const double cells = static_cast<double>(cfg.contexts.size() * reps);
      out.pool_rmse[controller_name(kind)] = rmse_sum / cells;
      out.pool_max[controller_name(kind)] = max_sum / cells;
    }

    // Environment x trajectory grid.
    if (verbose) std::cout << "[suite] seed " << seed << ": environment grid\n";
    for (const auto& env : envs) {
      struct TrajCase {
        std::string name;
        std::vector<std::pair<Trajectory, int>> runs;  // trajectory, corner
      };
      std::vector<TrajCase> cases;
      TrajCase hover{"hover", {}};
      for (int corner = 0; corner < 4; ++corner)
        hover.runs.push_back({Trajectory::hover(corner, cfg.harness.rise_height,
                                                cfg.harness.hover_hold_s),
                              corner});
      cases.push_back(hover);
      cases.push_back({"square", {{Trajectory::square(cfg.harness.traj_speed,
                                                      cfg.harness.rise_height),
                                   -1}}});
      cases.push_back({"figure8", {{Trajectory::figure8(cfg.harness.traj_speed,
                                                        cfg.harness.rise_height),
                                    -1}}});

      for (const auto& tc : cases) {
        for (const auto kind : kinds) {
          for (const auto& [traj, corner] : tc.runs) {
            const std::uint64_t run_seed =
                mix_seed(seed, static_cast<std::uint64_t>(env.id),
                         fnv1a(tc.name) ^ static_cast<std::uint64_t>(corner + 1));
            RunRecord rec = run_episode(env, traj, kind, set_for(kind), run_seed, cfg);
            rec.corner = corner;
            const Metrics m = compute_metrics(rec);
            const std::string key = std::string(controller_name(kind)) + "," +
                                    std::to_string(env.id) + "," + tc.name;
            out.cell_rmse[key].push_back(m.rmse_ape);
            out.cell_max[key].push_back(m.max_ape);

            // Fig-7-style APE series.
            CsvWriter ape_csv({"t", "ape_m", "ctx_id", "model_id"});
            for (std::size_t i = 0; i < rec.rows.size(); ++i) {
              ape_csv.add_row({format_double(rec.rows[i].t), format_double(m.ape[i]),
                               std::to_string(rec.rows[i].ctx_id),
                               std::to_string(rec.rows[i].model_id)});
            }
            ape_csv.write(out_dir + "/ape_series/" +
                          run_stem(controller_name(kind), env.id, tc.name, seed, corner) +
                          ".csv");
          }
        }
      }
    }
    return out;
  };

  const int workers = cfg.harness.suite_workers > 0
                          ? cfg.harness.suite_workers
                          : std::max(1u, std::thread::hardware_concurrency());
  std::vector<SeedOutput> outputs(cfg.harness.seeds.size());
  for (std::size_t base = 0; base < cfg.harness.seeds.size();
       base += static_cast<std::size_t>(workers)) {
    std::vector<std::thread> batch;
    for (std::size_t si = base;
         si < std::min(base + static_cast<std::size_t>(workers), cfg.harness.seeds.size());
         ++si) {
      batch.emplace_back(
          [&, si]() { outputs[si] = run_seed(cfg.harness.seeds[si]); });
    }
    for (auto& t : batch) t.join();
  }

  SuiteResult result;
  std::map<std::string, std::vector<double>> cell_rmse, cell_max;
  for (const auto kind : kinds) {
    result.pool_rmse[controller_name(kind)] = {};
    result.pool_max_ape[controller_name(kind)] = {};
  }
  for (const auto& out : outputs) {
    for (const auto kind : kinds) {
      const std::string name = controller_name(kind);
      result.pool_rmse[name].push_back(out.pool_rmse.at(name));
      result.pool_max_ape[name].push_back(out.pool_max.at(name));
    }
    for (const auto& [key, vals] : out.cell_rmse)
      cell_rmse[key].insert(cell_rmse[key].end(), vals.begin(), vals.end());
    for (const auto& [key, vals] : out.cell_max)
      cell_max[key].insert(cell_max[key].end(), vals.begin(), vals.end());
  }

  // Aggregate the grid into the Table-I-shaped CSV.
  for (const auto kind : kinds) {
    for (const auto& env : envs) {
      for (const std::string traj : {"hover", "square", "figure8"}) {
        const std::string key =
            std::string(controller_name(kind)) + "," + std::to_string(env.id) + "," + traj;
        const auto& rmses = cell_rmse[key];
        const auto& maxes = cell_max[key];
        CellResult cell;
        cell.controller = controller_name(kind);
        cell.env_id = env.id;
        cell.trajectory = traj;
        cell.n_runs = static_cast<int>(rmses.size());
        for (double r : rmses) cell.rmse_ape_m += r;
        for (double x : maxes) cell.max_ape_m += x;
        if (cell.n_runs > 0) {
          cell.rmse_ape_m /= cell.n_runs;
          cell.max_ape_m /= cell.n_runs;
        }
        result.table.push_back(cell);
      }
    }
  }

  CsvWriter table_csv({"controller", "env", "trajectory", "rmse_ape_m", "max_ape_m", "n_runs"});
  for (const auto& c : result.table) {
    table_csv.add_row({c.controller, std::to_string(c.env_id), c.trajectory,
                       format_double(c.rmse_ape_m), format_double(c.max_ape_m),
                       std::to_string(c.n_runs)});
  }
  table_csv.write(out_dir + "/results_table.csv");

  // Fig-6-style summary: mean max APE per controller over square/figure8.
  CsvWriter max_csv({"controller", "env", "trajectory", "mean_max_ape_m"});
  for (const auto& c : result.table) {
    if (c.trajectory == "hover") continue;
    max_csv.add_row({c.controller, std::to_string(c.env_id), c.trajectory,
                     format_double(c.max_ape_m)});
  }
  max_csv.write(out_dir + "/max_ape_summary.csv");

  // Pool-averaged per-seed ordering data and improvement percentages.
  CsvWriter pool_csv({"controller", "seed", "pool_rmse_ape_m", "pool_max_ape_m"});
  for (const auto kind : kinds) {
    const std::string name = controller_name(kind);
    for (std::size_t si = 0; si < cfg.harness.seeds.size(); ++si) {
      pool_csv.add_row({name, std::to_string(cfg.harness.seeds[si]),
                        format_double(result.pool_rmse[name][si]),
                        format_double(result.pool_max_ape[name][si])});
    }
  }
  pool_csv.write(out_dir + "/pool_ordering.csv");

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
  };
  CsvWriter imp_csv({"metric", "base", "one", "budget", "full", "budget_vs_one_pct",
                     "budget_vs_base_pct"});
  {
    const double b = mean_of(result.pool_rmse["base"]);
    const double o = mean_of(result.pool_rmse["one"]);
    const double k3 = mean_of(result.pool_rmse["budget"]);
    const double f = mean_of(result.pool_rmse["full"]);
    imp_csv.add_row({"pool_rmse_ape_m", format_double(b), format_double(o), format_double(k3),
                     format_double(f), format_double(o > 0 ? 100.0 * (o - k3) / o : 0.0),
                     format_double(b > 0 ? 100.0 * (b - k3) / b : 0.0)});
    const double bm = mean_of(result.pool_max_ape["base"]);
    const double om = mean_of(result.pool_max_ape["one"]);
    const double km = mean_of(result.pool_max_ape["budget"]);
    const double fm = mean_of(result.pool_max_ape["full"]);
    imp_csv.add_row({"pool_max_ape_m", format_double(bm), format_double(om), format_double(km),
                     format_double(fm), format_double(om > 0 ? 100.0 * (om - km) / om : 0.0),
                     format_double(bm > 0 ? 100.0 * (bm - km) / bm : 0.0)});
  }
  imp_csv.write(out_dir + "/improvements.csv");

  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::vector<CellResult> aggregate_run_dir(const std::string& runs_dir) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.path().extension() != ".csv") continue;
    const std::string stem = entry.path().stem().string();
    const fs::path meta_path = entry.path().parent_path() / (stem + ".meta.json");
    if (!fs::exists(meta_path)) continue;
    std::ifstream cf(entry.path());
    std::string csv_text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
    std::ifstream mf(meta_path);
    std::string meta_text((std::istreambuf_iterator<char>(mf)),
                          std::istreambuf_iterator<char>());
    const RunRecord rec = run_record_from_csv(csv_text, meta_text);
    if (rec.rows.empty()) continue;
    const Metrics m = compute_metrics(rec);
    const std::string key =
        rec.controller + "," + std::to_string(rec.env_id) + "," + rec.traj_name;
    cells[key].first.push_back(m.rmse_ape);
    cells[key].second.push_back(m.max_ape);
  }

  std::vector<CellResult> out;
  for (const auto& [key, vals] : cells) {
    CellResult cell;
    std::stringstream ks(key);
    std::string part;
    std::getline(ks, cell.controller, ',');
    std::getline(ks, part, ',');
    cell.env_id = std::stoi(part);
    std::getline(ks, cell.trajectory, ',');
    cell.n_runs = static_cast<int>(vals.first.size());
    for (double r : vals.first) cell.rmse_ape_m += r;
    for (double x : vals.second) cell.max_ape_m += x;
    cell.rmse_ape_m /= cell.n_runs;
    cell.max_ape_m /= cell.n_runs;
    out.push_back(cell);
  }
  return out;
}

std::string results_table_csv(const std::vector<CellResult>& cells) {
  CsvWriter csv({"controller", "env", "trajectory", "rmse_ape_m", "max_ape_m", "n_runs"});
  for (const auto& c : cells) {
    csv.add_row({c.controller, std::to_string(c.env_id), c.trajectory,
                 format_double(c.rmse_ape_m), format_double(c.max_ape_m),
                 std::to_string(c.n_runs)});
  }
  return csv.str();
}

}  // namespace ctxmhe
