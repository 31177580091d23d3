#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxmhe/environment.hpp"
#include "ctxmhe/training.hpp"

namespace ctxmhe {

enum class ControllerKind { kBaseEkf, kOneContext, kKContext, kFullContext };

const char* controller_name(ControllerKind kind);
ControllerKind controller_from_name(const std::string& name);

/// Trained models plus the evaluation table that drives test-time selection.
struct ModelSet {
  std::vector<TrainedModel> models;
  PerformanceTable table;
  std::vector<int> trained_ctx_ids;
  int one_context_choice = -1;  // lowest mean-loss model
};

ModelSet make_model_set(const ContextualLearningResult& result);

void save_model_set(const ModelSet& set, const std::vector<SelectionStep>& trace,
                    const std::vector<WindContext>& pool, const std::string& dir,
                    std::uint64_t config_hash);
ModelSet load_model_set(const std::string& dir, const std::vector<WindContext>& pool);

struct StepRow {
  double t = 0.0;
  Vec3 setpoint = Vec3::Zero();
  Vec3 p = Vec3::Zero(), v = Vec3::Zero();
  Vec9 estimate = Vec9::Zero();
  Eigen::VectorXd theta;  // 25 entries; zeros for the EKF baseline
  int ctx_id = 0;
  int model_id = -1;
  double f_cmd = 0.0;
  Vec3 moment = Vec3::Zero();
  Vec3 true_force = Vec3::Zero(), true_torque = Vec3::Zero();
};

struct RunRecord {
  std::vector<StepRow> rows;
  std::string controller;
  int env_id = 0;
  std::string env_name;
  std::string traj_name;
  int corner = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct Metrics {
  std::vector<double> ape;
  double rmse_ape = 0.0;
  double max_ape = 0.0;
};

/// Closed-loop episode at 50 Hz under the requested controller. The active
/// context comes from the environment's quadrant map at the true position
/// (oracle classification); contextual controllers re-select their model at
/// context switches.
RunRecord run_episode(const Environment& env, const Trajectory& traj, ControllerKind kind,
                      const ModelSet* models, std::uint64_t seed, const FullConfig& cfg,
                      std::string* mhe_dump = nullptr);

Metrics compute_metrics(const RunRecord& record);

std::string run_record_to_csv(const RunRecord& record);
RunRecord run_record_from_csv(const std::string& csv_text, const std::string& meta_json);
std::string run_record_metadata_json(const RunRecord& record);

void save_run_record(const RunRecord& record, const std::string& dir,
                     const std::string& stem);

struct CellResult {
  std::string controller;
  int env_id = 0;
  std::string trajectory;
  double rmse_ape_m = 0.0;
  double max_ape_m = 0.0;
  int n_runs = 0;
};

struct SuiteResult {
  std::vector<CellResult> table;
  // Per-controller, per-seed metrics averaged over the 13-context pool.
  std::map<std::string, std::vector<double>> pool_rmse;
  std::map<std::string, std::vector<double>> pool_max_ape;
  double seconds = 0.0;
};

/// Trains per seed (budget 13 and budget 3), evaluates the four controllers
/// over the uniform 13-context pool and over the env x trajectory grid, and
/// writes the aggregate CSV outputs under out_dir.
SuiteResult run_suite(const FullConfig& cfg, const std::string& out_dir, bool verbose = false);

/// Aggregates saved run records into the results-table CSV.
std::vector<CellResult> aggregate_run_dir(const std::string& runs_dir);
std::string results_table_csv(const std::vector<CellResult>& cells);

/// One-sided sign test: probability of at least `successes` wins out of
/// `trials` under a fair coin.
double sign_test_p_value(int successes, int trials);

}  // namespace ctxmhe
