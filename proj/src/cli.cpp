#include "ctxmhe/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ctxmhe/csvio.hpp"
#include "ctxmhe/harness.hpp"
#include "ctxmhe/rng.hpp"

namespace fs = std::filesystem;

namespace ctxmhe::cli {

namespace {

FullConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return FullConfig::defaults();
  return FullConfig::load(path);
}

int cmd_select(const std::string& config_path, int budget, const std::string& out,
               std::uint64_t seed) {
  const FullConfig cfg = load_config_or_default(config_path);
  SimContextBackend backend(cfg);
  const ContextualLearningResult result = run_contextual_learning(
      cfg.contexts, budget, backend, cfg.gp, cfg.selection, seed);
  const ModelSet set = make_model_set(result);
  save_model_set(set, result.trace, cfg.contexts, out, cfg.hash());
  std::cout << "trained " << set.models.size() << " models; aggregate loss V = "
            << format_double(result.table.aggregate_loss()) << "\n";
  for (std::size_t k = 0; k < result.trained_ctx_ids.size(); ++k) {
    std::cout << "  step " << k << ": context " << result.trained_ctx_ids[k] << " ("
              << context_name(cfg.contexts.at(result.trained_ctx_ids[k])) << ")\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, int ctx_id, const std::string& out,
              std::uint64_t seed) {
  const FullConfig cfg = load_config_or_default(config_path);
  if (ctx_id < 0 || ctx_id >= static_cast<int>(cfg.contexts.size())) {
    std::cerr << "context id must be in [0, " << cfg.contexts.size() - 1 << "]\n";
    return 1;
  }
  SimContextBackend backend(cfg);
  const TrainedModel model = backend.train(ctx_id, seed);
  fs::create_directories(out);
  const std::string path = out + "/model_ctx" + std::to_string(ctx_id) + ".json";
  save_checkpoint(Checkpoint{model.net, model.mapping, model.metadata}, path);
  std::cout << "context " << ctx_id << " (" << context_name(cfg.contexts.at(ctx_id))
            << "): episodes = " << model.metadata.episodes
            << ", converged = " << (model.metadata.converged ? "yes" : "no")
            << ", final loss = "
            << format_double(model.metadata.loss_history.empty()
                                 ? 0.0
                                 : model.metadata.loss_history.back())
            << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, int env_id, const std::string& traj_name,
                 const std::string& controller, std::uint64_t seed,
                 const std::string& models_dir, const std::string& out, int corner,
                 bool dump_mhe) {
  const FullConfig cfg = load_config_or_default(config_path);
  const ControllerKind kind = controller_from_name(controller);

  Environment env;
  const auto envs = default_environments();
  bool found = false;
  for (const auto& e : envs) {
    if (e.id == env_id) {
      env = e;
      found = true;
      break;
    }
  }
  if (!found) {
    std::cerr << "env must be one of {1, 2, 3}\n";
    return 1;
  }
  env.no_wind_margin = cfg.harness.no_wind_margin;

  Trajectory traj = Trajectory::hover(corner, cfg.harness.rise_height, cfg.harness.hover_hold_s);
  if (traj_name == "square") {
    traj = Trajectory::square(cfg.harness.traj_speed, cfg.harness.rise_height);
  } else if (traj_name == "figure8") {
    traj = Trajectory::figure8(cfg.harness.traj_speed, cfg.harness.rise_height);
  } else if (traj_name != "hover") {
    std::cerr << "traj must be one of {hover, square, figure8}\n";
    return 1;
  }

  ModelSet set{{}, PerformanceTable({ContextPoint(0, 0)}), {}, -1};
  const ModelSet* set_ptr = nullptr;
  if (kind != ControllerKind::kBaseEkf) {
    if (models_dir.empty()) {
      std::cerr << "controller '" << controller << "' requires --models DIR\n";
      return 1;
    }
    set = load_model_set(models_dir, cfg.contexts);
    set_ptr = &set;
  }

  std::string mhe_dump;
  RunRecord record = run_episode(env, traj, kind, set_ptr, seed, cfg,
                                 dump_mhe ? &mhe_dump : nullptr);
  record.corner = traj_name == "hover" ? corner : -1;
  const Metrics m = compute_metrics(record);
  std::cout << "steps = " << record.rows.size() << ", rmse_ape = " << format_double(m.rmse_ape)
            << " m, max_ape = " << format_double(m.max_ape) << " m"
            << (record.aborted ? " [ABORTED: " + record.abort_reason + "]" : "") << "\n";

  if (!out.empty()) {
    const std::string stem = "record_" + record.controller + "_env" +
                             std::to_string(env_id) + "_" + traj_name + "_seed" +
                             std::to_string(seed) +
                             (record.corner >= 0 ? "_c" + std::to_string(record.corner) : "");
    save_run_record(record, out, stem);
    if (dump_mhe) {
      std::ofstream df(out + "/" + stem + ".mhe_dump.csv", std::ios::binary);
      df << mhe_dump;
    }
    std::cout << "wrote " << out << "/" << stem << ".csv\n";
  }
  return record.aborted ? 2 : 0;
}

int cmd_eval(const std::string& runs_dir, const std::string& out) {
  const std::vector<CellResult> cells = aggregate_run_dir(runs_dir);
  if (cells.empty()) {
    std::cerr << "no run records found in " << runs_dir << "\n";
    return 1;
  }
  const std::string csv = results_table_csv(cells);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out, std::ios::binary);
    f << csv;
    std::cout << "wrote " << out << " (" << cells.size() << " cells)\n";
  }
  return 0;
}

int cmd_gradcheck(const std::string& config_path, const std::string& out, bool end_to_end,
                  int instances) {
  const FullConfig cfg = load_config_or_default(config_path);
  const ThetaGradcheckReport report = run_theta_gradcheck(cfg, instances);

  CsvWriter csv({"component", "name", "max_rel_err", "pass"});
  const auto name_of = [](int i) -> std::string {
    if (i < 9) return "P_" + std::to_string(i);
    if (i < 15) return "R_" + std::to_string(i - 9);
    if (i < 24) return "Q_" + std::to_string(i - 15);
    return "gamma";
  };
  for (const auto& row : report.rows) {
    csv.add_row({std::to_string(row.component), name_of(row.component),
                 format_double(row.max_rel_err), row.max_rel_err < 1e-3 ? "yes" : "no"});
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    csv.write(out);
  }
  std::cout << "theta gradcheck: " << report.instances << " instances, max rel err = "
            << format_double(report.overall_max_rel_err) << ", "
            << (report.pass ? "PASS" : "FAIL") << " (" << format_double(report.seconds)
            << " s)\n";

  bool ok = report.pass;
  if (end_to_end) {
    const EndToEndGradcheckReport e2e = run_end_to_end_gradcheck(cfg);
    std::cout << "end-to-end gradcheck: " << e2e.parameters_checked
              << " parameters, max rel err = " << format_double(e2e.max_rel_err) << ", "
              << (e2e.pass ? "PASS" : "FAIL") << "\n";
    ok = ok && e2e.pass;
  }
  return ok ? 0 : 1;
}

int cmd_plot(const std::string& runs_dir, const std::string& out) {
  fs::create_directories(out);
  int count = 0;
  std::map<std::string, std::pair<double, int>> max_ape_acc;
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
    CsvWriter series({"t", "ape_m", "ctx_id", "model_id"});
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
      series.add_row({format_double(rec.rows[i].t), format_double(m.ape[i]),
                      std::to_string(rec.rows[i].ctx_id),
                      std::to_string(rec.rows[i].model_id)});
    }
    series.write(out + "/ape_" + stem + ".csv");
    const std::string key = rec.controller + "," + std::to_string(rec.env_id) + "," +
                            rec.traj_name;
    max_ape_acc[key].first += m.max_ape;
    max_ape_acc[key].second += 1;
    ++count;
  }
  CsvWriter summary({"controller", "env", "trajectory", "mean_max_ape_m", "n_runs"});
  for (const auto& [key, acc] : max_ape_acc) {
    std::stringstream ks(key);
    std::string controller, env, traj;
    std::getline(ks, controller, ',');
    std::getline(ks, env, ',');
    std::getline(ks, traj, ',');
    summary.add_row({controller, env, traj, format_double(acc.first / acc.second),
                     std::to_string(acc.second)});
  }
  summary.write(out + "/max_ape_summary.csv");
  std::cout << "wrote " << count << " APE series + max_ape_summary.csv to " << out << "\n";
  return count > 0 ? 0 : 1;
}

int cmd_suite(const std::string& config_path, const std::string& out, bool verbose) {
  const FullConfig cfg = load_config_or_default(config_path);
  const SuiteResult result = run_suite(cfg, out, verbose);
  std::cout << results_table_csv(result.table);
  std::cout << "suite finished in " << format_double(result.seconds) << " s; outputs in "
            << out << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Contextual NeuroMHE: budgeted context selection for a learned "
               "moving-horizon disturbance estimator"};
  app.require_subcommand(1);

  std::string config_path, out, models_dir, runs_dir, traj = "hover", controller = "base";
  int budget = 3, ctx_id = 0, env_id = 1, corner = 0, instances = 20;
  std::uint64_t seed = 1;
  bool dump_mhe = false, end_to_end = false, verbose = false;

  auto* select = app.add_subcommand("select", "run budgeted context selection and training");
  select->add_option("--budget", budget, "number of contexts to train")->required();
  select->add_option("--config", config_path, "config JSON path");
  select->add_option("--out", out, "output model directory")->required();
  select->add_option("--seed", seed, "master seed");

  auto* train = app.add_subcommand("train", "train one context to convergence");
  train->add_option("--context", ctx_id, "context id (0..12)")->required();
  train->add_option("--config", config_path, "config JSON path");
  train->add_option("--out", out, "output directory")->default_val("models");
  train->add_option("--seed", seed, "master seed");

  auto* simulate = app.add_subcommand("simulate", "run one closed-loop episode");
  simulate->add_option("--env", env_id, "environment id {1,2,3}")->required();
  simulate->add_option("--traj", traj, "trajectory {hover,square,figure8}")->required();
  simulate->add_option("--controller", controller, "{base,one,budget,full}")->required();
  simulate->add_option("--seed", seed, "episode seed")->required();
  simulate->add_option("--models", models_dir, "model directory for non-base controllers");
  simulate->add_option("--out", out, "directory for the run record");
  simulate->add_option("--corner", corner, "hover corner (0..3)");
  simulate->add_option("--config", config_path, "config JSON path");
  simulate->add_flag("--dump-mhe", dump_mhe, "dump per-step MHE windows");

  auto* eval = app.add_subcommand("eval", "aggregate run records into the results table");
  eval->add_option("--runs", runs_dir, "directory of run records")->required();
  eval->add_option("--out", out, "output CSV (stdout when omitted)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference sensitivity suite");
  gradcheck->add_option("--config", config_path, "config JSON path");
  gradcheck->add_option("--out", out, "CSV output path (stdout when omitted)");
  gradcheck->add_option("--instances", instances, "number of random windows");
  gradcheck->add_flag("--end-to-end", end_to_end, "also check the network-parameter gradient");

  auto* plot = app.add_subcommand("plot", "emit plot-ready CSV series from run records");
  plot->add_option("--runs", runs_dir, "directory of run records")->required();
  plot->add_option("--out", out, "output directory")->required();

  auto* suite = app.add_subcommand("suite", "full select + train + evaluate reproduction run");
  suite->add_option("--config", config_path, "config JSON path");
  suite->add_option("--out", out, "output directory")->required();
  suite->add_flag("--verbose", verbose, "progress to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (select->parsed()) return cmd_select(config_path, budget, out, seed);
    if (train->parsed()) return cmd_train(config_path, ctx_id, out, seed);
    if (simulate->parsed())
      return cmd_simulate(config_path, env_id, traj, controller, seed, models_dir, out, corner,
                          dump_mhe);
    if (eval->parsed()) return cmd_eval(runs_dir, out);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path, out, end_to_end, instances);
    if (plot->parsed()) return cmd_plot(runs_dir, out);
    if (suite->parsed()) return cmd_suite(config_path, out, verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ctxmhe::cli
