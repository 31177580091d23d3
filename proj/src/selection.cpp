#include "ctxmhe/selection.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ctxmhe/csvio.hpp"
#include "ctxmhe/rng.hpp"
#include "json.hpp"

namespace ctxmhe {

void PerformanceTable::add_model_row(const std::vector<double>& losses) {
  if (static_cast<int>(losses.size()) != pool_size())
    throw std::invalid_argument("PerformanceTable: evaluation row must cover the pool");
  for (double l : losses)
    if (!std::isfinite(l)) throw std::invalid_argument("PerformanceTable: non-finite loss");
  rows_.push_back(losses);
}

double PerformanceTable::composite_loss(int pool_index) const {
  if (empty()) throw std::logic_error("PerformanceTable: no models yet");
  double best = rows_[0].at(pool_index);
  for (const auto& row : rows_) best = std::min(best, row.at(pool_index));
  return best;
}

double PerformanceTable::aggregate_loss() const {
  double sum = 0.0;
  for (int i = 0; i < pool_size(); ++i) sum += composite_loss(i);
  return sum / pool_size();
}

double PerformanceTable::best_performance(int pool_index) const {
  return -composite_loss(pool_index);
}

int PerformanceTable::best_model(int pool_index) const {
  if (empty()) throw std::logic_error("PerformanceTable: no models yet");
  int best = 0;
  for (int i = 1; i < models(); ++i) {
    if (rows_[i].at(pool_index) < rows_[best].at(pool_index)) best = i;
  }
  return best;
}

double PerformanceTable::mean_loss_of_model(int model) const {
  const auto& row = rows_.at(model);
  double sum = 0.0;
  for (double l : row) sum += l;
  return sum / row.size();
}

int PerformanceTable::nearest_pool_index(const ContextPoint& c) const {
  int best = 0;
  double best_d = (pool_[0] - c).norm();
  for (int i = 1; i < pool_size(); ++i) {
    const double d = (pool_[i] - c).norm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::string PerformanceTable::to_csv() const {
  std::ostringstream out;
  out << "model";
  for (const auto& c : pool_)
    out << ",ctx_" << context_id(static_cast<int>(c.x()), static_cast<int>(c.y()));
  out << "\n";
  for (int i = 0; i < models(); ++i) {
    out << i;
    for (double l : rows_[i]) out << "," << format_double(l);
    out << "\n";
  }
  return out.str();
}

void update_value(PerformanceTable& table, const std::vector<double>& new_model_losses) {
  table.add_model_row(new_model_losses);
}

double acquisition(const ContextPoint& candidate, const GpModel& gp,
                   const PerformanceTable& table, double beta, const GapModel& gap,
                   const std::vector<ContextPoint>& candidate_pool, double no_model_floor) {
  if (candidate_pool.empty()) throw std::invalid_argument("acquisition: empty candidate pool");
  const auto [mean, var] = gp.posterior(candidate);
  const double ucb = mean + std::sqrt(beta) * std::sqrt(std::max(var, 0.0));
  double sum = 0.0;
  for (std::size_t i = 0; i < candidate_pool.size(); ++i) {
    const double best =
        table.empty() ? no_model_floor : table.best_performance(static_cast<int>(i));
    const double bracket = ucb - gap.gap(candidate, candidate_pool[i]) - best;
    sum += std::max(bracket, 0.0);
  }
  return sum / static_cast<double>(candidate_pool.size());
}

int select_next_context(const std::vector<ContextPoint>& pool,
                        const std::vector<bool>& selected, const GpModel& gp,
                        const PerformanceTable& table, double beta, const GapModel& gap,
                        double no_model_floor) {
  if (pool.size() != selected.size())
    throw std::invalid_argument("select_next_context: mask size mismatch");
  int best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (selected[i]) continue;
    const double a = acquisition(pool[i], gp, table, beta, gap, pool, no_model_floor);
    const bool better =
        a > best_value ||
        (a == best_value && best >= 0 &&
         (pool[i].x() < pool[best].x() ||
          (pool[i].x() == pool[best].x() && pool[i].y() < pool[best].y())));
    if (best < 0 || better) {
      best = static_cast<int>(i);
      best_value = a;
    }
  }
  if (best < 0) throw std::runtime_error("select_next_context: all candidates selected");
  return best;
}

int select_model_at_test(const PerformanceTable& table, const ContextPoint& ctx,
                         bool* snapped) {
  if (table.empty()) throw std::logic_error("select_model_at_test: empty table");
  int idx = -1;
  for (int i = 0; i < table.pool_size(); ++i) {
    if ((table.pool()[i] - ctx).norm() < 1e-12) {
      idx = i;
      break;
    }
  }
  if (snapped) *snapped = idx < 0;
  if (idx < 0) idx = table.nearest_pool_index(ctx);
  return table.best_model(idx);
}

ContextualLearningResult run_contextual_learning(const std::vector<WindContext>& pool,
                                                 int budget, ContextTrainBackend& backend,
                                                 const GpConfig& gp_cfg,
                                                 const SelectionConfig& sel_cfg,
                                                 std::uint64_t seed) {
  if (budget < 1 || budget > static_cast<int>(pool.size()))
    throw std::invalid_argument("run_contextual_learning: budget must be in [1, |pool|]");

  std::vector<ContextPoint> points;
  points.reserve(pool.size());
  for (const auto& ctx : pool) points.push_back(context_point(ctx));

  ContextualLearningResult result{{}, {}, PerformanceTable(points), {}};
  GpModel gp(gp_cfg);
  GapModel gap{sel_cfg.gap_alpha};
  std::vector<bool> selected(pool.size(), false);

  for (int k = 0; k < budget; ++k) {
    SelectionStep step;
    step.step = k;
    step.acquisition_values.assign(pool.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (selected[i]) continue;
      step.acquisition_values[i] = acquisition(points[i], gp, result.table, sel_cfg.beta,
                                               gap, points, sel_cfg.no_model_floor);
    }
    const int pick = select_next_context(points, selected, gp, result.table, sel_cfg.beta,
                                         gap, sel_cfg.no_model_floor);
    selected[pick] = true;
    const int ctx_id_picked = context_id(pool[pick].direction_code, pool[pick].speed_level);
    step.chosen_ctx = ctx_id_picked;

    TrainedModel model = backend.train(ctx_id_picked, mix_seed(seed, seed_tag::kTrain, k));
    step.training_loss_history = model.metadata.loss_history;
    // Realized training performance feeds the GP as a negated loss.
    const double train_loss = model.metadata.loss_history.empty()
                                  ? 0.0
                                  : model.metadata.loss_history.back();
    gp.add_observation(points[pick], -train_loss);

    // Shared evaluation seed keeps model comparisons paired per context.
    const std::vector<double> evals = backend.evaluate(model, mix_seed(seed, seed_tag::kEval));
    update_value(result.table, evals);
    step.v_aggregate = result.table.aggregate_loss();

    result.models.push_back(std::move(model));
    result.trained_ctx_ids.push_back(ctx_id_picked);
    result.trace.push_back(std::move(step));
  }
  return result;
}

std::string selection_trace_to_json(const ContextualLearningResult& result,
                                    const std::vector<WindContext>& pool) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& step : result.trace) {
    nlohmann::json acq = nlohmann::json::object();
    for (std::size_t i = 0; i < step.acquisition_values.size(); ++i) {
      const int id = context_id(pool[i].direction_code, pool[i].speed_level);
      if (std::isfinite(step.acquisition_values[i]))
        acq["ctx_" + std::to_string(id)] = step.acquisition_values[i];
    }
    j.push_back({{"step", step.step},
                 {"chosen_context", step.chosen_ctx},
                 {"acquisition_per_candidate", acq},
                 {"training_loss_history_ref", step.training_loss_history},
                 {"V_aggregate", step.v_aggregate}});
  }
  return j.dump(2);
}

}  // namespace ctxmhe
