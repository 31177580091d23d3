#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "ctxmhe/harness.hpp"

using namespace ctxmhe;

namespace {

FullConfig cfg_defaults() { return FullConfig::defaults(); }

// Four stub models whose table makes a distinct model optimal at each
// environment-1 quadrant context.
ModelSet fabricated_set(const FullConfig& cfg, const std::vector<int>& ctx_ids) {
  std::vector<ContextPoint> pool;
  for (const auto& ctx : cfg.contexts) pool.push_back(context_point(ctx));
  ModelSet set{{}, PerformanceTable(pool), {}, 0};
  for (std::size_t m = 0; m < ctx_ids.size(); ++m) {
    TrainedModel model;
    model.net = WeightNet::initialize(100 + m, default_output_bias(cfg), cfg.net.init_scale);
    model.metadata.context_id = ctx_ids[m];
    set.models.push_back(model);
    set.trained_ctx_ids.push_back(ctx_ids[m]);
    std::vector<double> row(pool.size(), 1.0);
    row[ctx_ids[m]] = 0.1;
    set.table.add_model_row(row);
  }
  return set;
}

}  // namespace

TEST_CASE("metrics: perfect tracking and constant offset") {
  RunRecord rec;
  for (int k = 0; k < 10; ++k) {
    StepRow row;
    row.t = 0.02 * k;
    row.setpoint = Vec3(0.1 * k, 0, 0.5);
    row.p = row.setpoint;
    row.theta = Eigen::VectorXd::Zero(25);
    rec.rows.push_back(row);
  }
  Metrics m = compute_metrics(rec);
  CHECK(m.rmse_ape == 0.0);
  CHECK(m.max_ape == 0.0);

  for (auto& row : rec.rows) row.p += Vec3(0.03, -0.04, 0.0);
  m = compute_metrics(rec);
  CHECK(m.rmse_ape == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(m.max_ape == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("metrics match a spreadsheet-style recomputation") {
  RunRecord rec;
  const double px[3] = {0.1, 0.25, -0.05};
  const double sx[3] = {0.0, 0.2, 0.0};
  for (int k = 0; k < 3; ++k) {
    StepRow row;
    row.t = k * 0.02;
    row.p = Vec3(px[k], 0.1, 0.5);
    row.setpoint = Vec3(sx[k], 0.0, 0.4);
    row.theta = Eigen::VectorXd::Zero(25);
    rec.rows.push_back(row);
  }
  const Metrics m = compute_metrics(rec);
  double sq = 0.0, mx = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double ape =
        std::sqrt((px[k] - sx[k]) * (px[k] - sx[k]) + 0.1 * 0.1 + 0.1 * 0.1);
    sq += ape * ape;
    mx = std::max(mx, ape);
    CHECK(m.ape[k] == doctest::Approx(ape).epsilon(1e-12));
  }
  CHECK(m.rmse_ape == doctest::Approx(std::sqrt(sq / 3)).epsilon(1e-12));
  CHECK(m.max_ape == doctest::Approx(mx).epsilon(1e-12));
  CHECK(m.max_ape >= m.rmse_ape);
}

TEST_CASE("every point in each environment maps to exactly one context") {
  for (const auto& env : default_environments()) {
    for (double x = -0.75; x <= 0.751; x += 0.05) {
      for (double y = -0.75; y <= 0.751; y += 0.05) {
        for (double z : {0.0, 0.5, 1.0}) {
          const int ctx = env.active_context(Vec3(x, y, z));
          CHECK(ctx >= 0);
          CHECK(ctx < 13);
        }
      }
    }
  }
}

TEST_CASE("no-wind margin forces the null context near boundaries") {
  Environment env = default_environments()[0];
  env.no_wind_margin = 0.1;
  CHECK(env.active_context(Vec3(0.05, 0.5, 0.5)) == 0);
  CHECK(env.active_context(Vec3(0.5, 0.05, 0.5)) == 0);
  CHECK(env.active_context(Vec3(0.5, 0.5, 0.5)) == env.quadrant_ctx[3]);
}

TEST_CASE("trajectory setpoints stay inside the flight volume") {
  const Environment env = default_environments()[0];
  std::vector<Trajectory> trajs = {Trajectory::hover(0), Trajectory::hover(3),
                                   Trajectory::square(), Trajectory::figure8(),
                                   Trajectory::line(Vec3(-0.6, 0, 0.5), Vec3(0.6, 0, 0.5))};
  for (const auto& traj : trajs) {
    for (double t = 0.0; t <= traj.duration() + 0.5; t += 0.02) {
      const ReferencePoint ref = traj.at(t);
      CHECK(env.contains(ref.x_d));
    }
  }
}

TEST_CASE("square trajectory visits the four corners at the configured speed") {
  const Trajectory traj = Trajectory::square(0.3, 0.5, 0.6);
  bool seen[4] = {false, false, false, false};
  const Vec3 corners[4] = {Vec3(-0.6, -0.6, 0.5), Vec3(-0.6, 0.6, 0.5), Vec3(0.6, 0.6, 0.5),
                           Vec3(0.6, -0.6, 0.5)};
  for (double t = 0; t < traj.duration(); t += 0.01) {
    const ReferencePoint ref = traj.at(t);
    CHECK(ref.v_d.norm() < 0.31);
    for (int c = 0; c < 4; ++c)
      if ((ref.x_d - corners[c]).norm() < 1e-3) seen[c] = true;
  }
  for (int c = 0; c < 4; ++c) CHECK(seen[c]);
}

TEST_CASE("base controller holds a no-wind hover within two centimeters RMSE") {
  FullConfig cfg = cfg_defaults();
  const Environment env = uniform_environment(0);
  const Trajectory traj = Trajectory::hover(0, cfg.harness.rise_height, cfg.harness.hover_hold_s);
  const RunRecord rec = run_episode(env, traj, ControllerKind::kBaseEkf, nullptr, 11, cfg);
  REQUIRE(!rec.aborted);
  const Metrics m = compute_metrics(rec);
  CHECK(m.rmse_ape < 0.02);
  CHECK(m.max_ape >= m.rmse_ape);
}

TEST_CASE("contextual controller switches models exactly at quadrant changes") {
  FullConfig cfg = cfg_defaults();
  Environment env = default_environments()[0];
  const std::vector<int> quad_ctxs = {env.quadrant_ctx[0], env.quadrant_ctx[1],
                                      env.quadrant_ctx[2], env.quadrant_ctx[3]};
  const ModelSet set = fabricated_set(cfg, quad_ctxs);

  const Trajectory traj = Trajectory::square(cfg.harness.traj_speed, cfg.harness.rise_height);
  const RunRecord rec =
      run_episode(env, traj, ControllerKind::kKContext, &set, 5, cfg);
  REQUIRE(!rec.aborted);

  int switches = 0;
  for (std::size_t i = 1; i < rec.rows.size(); ++i) {
    if (rec.rows[i].ctx_id == rec.rows[i - 1].ctx_id) {
      CHECK(rec.rows[i].model_id == rec.rows[i - 1].model_id);
    } else {
      ++switches;
      // The new model is the table's best for the new context.
      const int expect =
          select_model_at_test(set.table, context_point(cfg.contexts.at(rec.rows[i].ctx_id)));
      CHECK(rec.rows[i].model_id == expect);
    }
  }
  CHECK(switches >= 3);  // the square crosses at least three quadrant boundaries
}

TEST_CASE("identical seeds give byte-identical run records") {
  FullConfig cfg = cfg_defaults();
  const Environment env = default_environments()[1];
  const Trajectory traj = Trajectory::hover(1, cfg.harness.rise_height, 1.0);

  const RunRecord a = run_episode(env, traj, ControllerKind::kBaseEkf, nullptr, 77, cfg);
  const RunRecord b = run_episode(env, traj, ControllerKind::kBaseEkf, nullptr, 77, cfg);
  CHECK(run_record_to_csv(a) == run_record_to_csv(b));

  const ModelSet set = fabricated_set(cfg, {0, 2, 3, 7});
  const RunRecord c = run_episode(env, traj, ControllerKind::kFullContext, &set, 77, cfg);
  const RunRecord d = run_episode(env, traj, ControllerKind::kFullContext, &set, 77, cfg);
  CHECK(run_record_to_csv(c) == run_record_to_csv(d));
  CHECK(run_record_to_csv(a) != run_record_to_csv(c));
}

TEST_CASE("run records round-trip through CSV and aggregate into the table") {
  FullConfig cfg = cfg_defaults();
  const Environment env = default_environments()[2];
  const Trajectory traj = Trajectory::hover(2, cfg.harness.rise_height, 1.0);
  RunRecord rec = run_episode(env, traj, ControllerKind::kBaseEkf, nullptr, 3, cfg);
  rec.corner = 2;

  const auto dir = std::filesystem::temp_directory_path() / "ctxmhe_runs_test";
  std::filesystem::remove_all(dir);
  save_run_record(rec, dir.string(), "record_base_env3_hover_seed3_c2");

  const RunRecord back = run_record_from_csv(
      [&] {
        std::ifstream f(dir / "record_base_env3_hover_seed3_c2.csv");
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
      }(),
      [&] {
        std::ifstream f(dir / "record_base_env3_hover_seed3_c2.meta.json");
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
      }());
  REQUIRE(back.rows.size() == rec.rows.size());
  const Metrics ma = compute_metrics(rec);
  const Metrics mb = compute_metrics(back);
  CHECK(ma.rmse_ape == mb.rmse_ape);
  CHECK(ma.max_ape == mb.max_ape);

  const auto cells = aggregate_run_dir(dir.string());
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].controller == "base");
  CHECK(cells[0].env_id == 3);
  CHECK(cells[0].trajectory == "hover");
  CHECK(cells[0].n_runs == 1);
  CHECK(cells[0].rmse_ape_m == doctest::Approx(ma.rmse_ape).epsilon(1e-14));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sign test tail probabilities") {
  CHECK(sign_test_p_value(5, 5) == doctest::Approx(1.0 / 32).epsilon(1e-12));
  CHECK(sign_test_p_value(4, 5) == doctest::Approx(6.0 / 32).epsilon(1e-12));
  CHECK(sign_test_p_value(0, 5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sign_test_p_value(6, 6) == doctest::Approx(1.0 / 64).epsilon(1e-12));
}

TEST_CASE("config loads the documented JSON schema keys") {
  const std::string text = R"({
    "params": {"mass_kg": 0.04, "arm_length_m": 0.05},
    "control": {"k_x": 0.5},
    "wind": {"low_force_n": 0.1,
             "contexts": [{"direction": 0, "level": 0},
                           {"direction": 3, "level": 1, "mean_force_n": [-0.12, 0, 0]}]},
    "harness": {"seeds": [7, 8]}
  })";
  const FullConfig cfg = FullConfig::from_json(text);
  CHECK(cfg.params.mass == 0.04);
  CHECK(cfg.params.arm_length == 0.05);
  CHECK(cfg.control.k_x == 0.5);
  REQUIRE(cfg.contexts.size() == 2);
  CHECK(cfg.contexts[1].direction_code == 3);
  CHECK(cfg.contexts[1].speed_level == 1);
  CHECK(cfg.contexts[1].mean_force(0) == -0.12);
  CHECK(cfg.harness.seeds == std::vector<std::uint64_t>{7, 8});

  // Round trip through the serializer preserves the hash.
  const FullConfig back = FullConfig::from_json(cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK_THROWS(FullConfig::from_json(R"({"wind": {"contexts": [{"direction": 9, "level": 1}]}})"));
}
