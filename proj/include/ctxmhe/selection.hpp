#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxmhe/gp.hpp"
#include "ctxmhe/weight_net.hpp"
#include "ctxmhe/wind.hpp"

namespace ctxmhe {

/// Linear-in-distance generalization gap between contexts.
struct GapModel {
  double alpha = 1e-3;

  double gap(const ContextPoint& a, const ContextPoint& b) const {
    return alpha * (a - b).norm();
  }
};

inline ContextPoint context_point(const WindContext& ctx) {
  return ContextPoint(static_cast<double>(ctx.direction_code),
                      static_cast<double>(ctx.speed_level));
}

/// Loss table over (model, context) pairs. The composite keeps, per context,
/// the best (lowest) loss across the models added so far; performance values
/// are negated losses.
class PerformanceTable {
 public:
  explicit PerformanceTable(std::vector<ContextPoint> pool) : pool_(std::move(pool)) {}

  int models() const { return static_cast<int>(rows_.size()); }
  int pool_size() const { return static_cast<int>(pool_.size()); }
  const std::vector<ContextPoint>& pool() const { return pool_; }
  const std::vector<double>& row(int model) const { return rows_.at(model); }

  void add_model_row(const std::vector<double>& losses);
  bool empty() const { return rows_.empty(); }

  double composite_loss(int pool_index) const;
  /// Mean composite loss over the pool (the empirical stand-in for the
  /// uniform expectation over contexts).
  double aggregate_loss() const;
  /// Best-so-far performance -min loss at a pool context.
  double best_performance(int pool_index) const;
  /// Model achieving the composite at a context; earliest model wins ties.
  int best_model(int pool_index) const;
  double mean_loss_of_model(int model) const;

  int nearest_pool_index(const ContextPoint& c) const;

  std::string to_csv() const;

 private:
  std::vector<ContextPoint> pool_;
  std::vector<std::vector<double>> rows_;  // per model, per pool context
};

/// Adds a model's per-context evaluations to the table (min-composite update).
void update_value(PerformanceTable& table, const std::vector<double>& new_model_losses);

/// Clipped UCB acquisition with gap and best-so-far penalties, averaged over
/// the candidate pool. `no_model_floor` stands in for the best-so-far
/// performance while the table is still empty.
double acquisition(const ContextPoint& candidate, const GpModel& gp,
                   const PerformanceTable& table, double beta, const GapModel& gap,
                   const std::vector<ContextPoint>& candidate_pool, double no_model_floor);

/// Argmax of the acquisition over unselected pool entries; ties break toward
/// the lexicographically smallest (direction, level).
int select_next_context(const std::vector<ContextPoint>& pool,
                        const std::vector<bool>& selected, const GpModel& gp,
                        const PerformanceTable& table, double beta, const GapModel& gap,
                        double no_model_floor);

/// Model with the best recorded performance at a context; contexts outside
/// the pool snap to the nearest pool entry (reported via `snapped`).
int select_model_at_test(const PerformanceTable& table, const ContextPoint& ctx,
                         bool* snapped = nullptr);

struct TrainedModel {
  WeightNet net;
  ThetaMapping mapping;
  CheckpointMetadata metadata;
};

/// Training/evaluation services used by the outer contextual-learning loop;
/// the simulator-backed implementation lives with the training code, tests
/// may substitute synthetic landscapes.
class ContextTrainBackend {
 public:
  virtual ~ContextTrainBackend() = default;
  virtual TrainedModel train(int ctx_id, std::uint64_t seed) = 0;
  /// Per-pool-context evaluation losses for a trained model.
  virtual std::vector<double> evaluate(const TrainedModel& model, std::uint64_t seed) = 0;
};

struct SelectionStep {
  int step = 0;
  int chosen_ctx = -1;
  std::vector<double> acquisition_values;  // aligned with the pool, NaN = already selected
  std::vector<double> training_loss_history;
  double v_aggregate = 0.0;
};

struct ContextualLearningResult {
  std::vector<TrainedModel> models;
  std::vector<int> trained_ctx_ids;
  PerformanceTable table;
  std::vector<SelectionStep> trace;
};

/// Budgeted outer loop: GP fit on realized training performances, acquisition
/// argmax, per-context training, cross-context evaluation, value update.
ContextualLearningResult run_contextual_learning(const std::vector<WindContext>& pool,
                                                 int budget, ContextTrainBackend& backend,
                                                 const GpConfig& gp_cfg,
                                                 const SelectionConfig& sel_cfg,
                                                 std::uint64_t seed);

std::string selection_trace_to_json(const ContextualLearningResult& result,
                                    const std::vector<WindContext>& pool);

}  // namespace ctxmhe
