#pragma once

// Training loop: iterations of uniformly sampled batches, curriculum-weighted
// losses, per-iteration validation by re-ranking, and early stopping with
// rollback to the best validation snapshot.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curricula/error.hpp"
#include "curricula/metrics.hpp"
#include "curricula/ranker.hpp"
#include "curricula/rng.hpp"
#include "curricula/schedule.hpp"
#include "curricula/types.hpp"

namespace curricula {

struct TrainConfig {
  int batches_per_iteration = 32;
  int batch_size = 16;
  int patience = 15;
  int max_iterations = 200;
  double learning_rate = 1e-3;
  std::size_t hidden_units = 16;
  MetricSpec validation_metric = MetricSpec::mrr_at(10);
  std::uint64_t seed = 0;

  void validate() const {
    if (batches_per_iteration < 1 || batch_size < 1 || patience < 1 || max_iterations < 1 ||
        !(learning_rate > 0.0) || hidden_units < 1) {
      throw InvalidArgument("TrainConfig: all sizes and the learning rate must be positive");
    }
  }
};

// One element of the training pool, referring to rows of TrainingTask::features.
// Pointwise items use `first` and `target`; pairwise items use `first` (positive)
// and `second` (negative).
struct PoolItem {
  std::size_t first = 0;
  std::size_t second = 0;
  double target = 0.0;
};

// A query's re-ranking candidates in first-stage order.
struct RerankPool {
  std::string query_id;
  std::vector<std::string> doc_ids;
  std::vector<std::size_t> rows;
};

struct TrainingTask {
  LossMode loss_mode = LossMode::pairwise;
  std::vector<FeatureVector> features;
  std::vector<PoolItem> pool;
  std::vector<TrainingSample> samples;  // parallel to pool
  std::vector<RerankPool> validation;
  Qrels qrels;

  std::size_t input_dim() const { return features.empty() ? 0 : features.front().size(); }
};

// Draws `batch_size` pool positions uniformly with replacement.
inline std::vector<std::size_t> sample_batch(std::size_t pool_size, int batch_size, Rng& rng) {
  if (pool_size == 0) throw DataError("sample_batch: empty training pool");
  std::vector<std::size_t> batch(static_cast<std::size_t>(batch_size));
  for (auto& b : batch) b = static_cast<std::size_t>(rng.index(pool_size));
  return batch;
}

template <typename T>
std::vector<T> sample_batch(const std::vector<T>& pool, int batch_size, Rng& rng) {
  std::vector<T> out;
  for (auto i : sample_batch(pool.size(), batch_size, rng)) out.push_back(pool[i]);
  return out;
}

// Scores each pool with the model and evaluates the re-ranked lists. Score ties
// keep first-stage order.
inline Runs rerank(const RankerModel& model, const std::vector<FeatureVector>& features,
                   const std::vector<RerankPool>& pools) {
  Runs runs;
  for (const auto& pool : pools) {
    RunList list;
    list.query_id = pool.query_id;
    for (std::size_t i = 0; i < pool.rows.size(); ++i) {
      list.entries.push_back({pool.doc_ids[i], model.score(features[pool.rows[i]]), 0});
    }
    std::stable_sort(list.entries.begin(), list.entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < list.entries.size(); ++i) list.entries[i].rank = static_cast<int>(i + 1);
    runs.emplace(pool.query_id, std::move(list));
  }
  return runs;
}

inline EvalResult evaluate_model(const RankerModel& model, const std::vector<FeatureVector>& features,
                                 const std::vector<RerankPool>& pools, const Qrels& qrels,
                                 const MetricSpec& metric) {
  return evaluate(rerank(model, features, pools), qrels, metric);
}

struct HistoryRow {
  int iteration = 0;
  double train_loss = 0.0;
  double mean_weight = 0.0;
  double valid_metric = 0.0;

  bool operator==(const HistoryRow&) const = default;
};

struct TrainState {
  RankerModel model;
  AdamOptimizer optimizer;
  Rng rng;
  int iteration = 0;
  double best_validation_value = -std::numeric_limits<double>::infinity();
  std::optional<RankerModel> best_model;
  int best_iteration = -1;
  int iterations_since_improvement = 0;

  static TrainState initial(std::size_t in_dim, const TrainConfig& config) {
    auto model = RankerModel::initialized(in_dim, config.hidden_units, config.seed);
    AdamOptimizer opt(model.theta().size(), AdamConfig{config.learning_rate});
    return TrainState{std::move(model), std::move(opt), Rng(Rng::derive(config.seed, 1)), 0,
                      -std::numeric_limits<double>::infinity(), std::nullopt, -1, 0};
  }
};

struct TrainHooks {
  // Called with the mean weighted gradient of every batch, before the optimizer step.
  std::function<void(int iteration, int batch, std::span<const double> grad)> on_batch_gradient;
};

struct IterationStats {
  double train_loss = 0.0;
  double mean_weight = 0.0;
};

// One training iteration: `batches_per_iteration` batches, each a mean of
// weighted per-sample losses followed by one Adam step. `difficulty` is
// parallel to task.pool.
inline IterationStats run_iteration(TrainState& state, const TrainingTask& task,
                                    std::span<const double> difficulty, const CurriculumSchedule& schedule,
                                    const TrainConfig& config, const TrainHooks& hooks = {}) {
  if (difficulty.size() != task.pool.size()) throw InvalidArgument("run_iteration: difficulty/pool size mismatch");
  const std::size_t n_params = state.model.theta().size();
  std::vector<double> grad(n_params);
  IterationStats stats;
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  for (int b = 0; b < config.batches_per_iteration; ++b) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (auto idx : sample_batch(task.pool.size(), config.batch_size, state.rng)) {
      const auto& item = task.pool[idx];
      const double w = schedule.weight(difficulty[idx], state.iteration);
      double loss = 0.0;
      if (task.loss_mode == LossMode::pointwise) {
        loss = pointwise_loss_accumulate(state.model, task.features[item.first], item.target, w, grad);
      } else {
        loss = pairwise_loss_accumulate(state.model, task.features[item.first], task.features[item.second], w,
                                        grad);
      }
      batch_loss += schedule.weighted_loss(difficulty[idx], state.iteration, loss);
      stats.mean_weight += w;
    }
    for (auto& g : grad) g *= inv_batch;
    batch_loss *= inv_batch;
    if (!std::isfinite(batch_loss)) {
      throw NumericalError("non-finite training loss at iteration " + std::to_string(state.iteration) +
                           ", batch " + std::to_string(b));
    }
    if (hooks.on_batch_gradient) hooks.on_batch_gradient(state.iteration, b, grad);
    state.optimizer.step(state.model, grad);
    stats.train_loss += batch_loss;
  }
  stats.train_loss /= config.batches_per_iteration;
  stats.mean_weight /= static_cast<double>(config.batches_per_iteration) * config.batch_size;
  ++state.iteration;
  return stats;
}

struct TrainResult {
  RankerModel best_model;
  double best_validation_value = 0.0;
  int best_iteration = 0;  // 0-based index of the iteration that produced best_model
  std::vector<HistoryRow> history;
};

// Trains until the validation metric has failed to improve for more than
// `patience` consecutive iterations, or `max_iterations` is reached, and
// returns the snapshot with the best validation value.
inline TrainResult train(const TrainingTask& task, std::span<const double> difficulty,
                         const CurriculumSchedule& schedule, const TrainConfig& config,
                         const TrainHooks& hooks = {}) {
  config.validate();
  if (task.pool.empty()) throw DataError("train: empty training pool");
  if (task.validation.empty()) throw DataError("train: no validation queries");
  auto state = TrainState::initial(task.input_dim(), config);
  std::vector<HistoryRow> history;
  while (state.iteration < config.max_iterations) {
    const int i = state.iteration;
    auto stats = run_iteration(state, task, difficulty, schedule, config, hooks);
    const double value =
        evaluate_model(state.model, task.features, task.validation, task.qrels, config.validation_metric).mean;
    history.push_back({i, stats.train_loss, stats.mean_weight, value});
    if (value > state.best_validation_value) {
      state.best_validation_value = value;
      state.best_model = state.model;
      state.best_iteration = i;
      state.iterations_since_improvement = 0;
    } else if (++state.iterations_since_improvement > config.patience) {
      break;
    }
  }
  return TrainResult{std::move(*state.best_model), state.best_validation_value, state.best_iteration,
                     std::move(history)};
}

struct GridRow {
  std::optional<int> m;
  double validation_value = 0.0;
  TrainResult result;
};

struct GridSearchResult {
  std::optional<int> best_m;
  std::vector<GridRow> rows;
};

inline const std::vector<int>& default_m_grid() {
  static const std::vector<int> kGrid = {1, 5, 10, 20, 50, 100};
  return kGrid;
}

// One training run per m; best is the highest validation value, ties to the
// smaller m (unbounded counts as largest).
inline GridSearchResult grid_search_m(const TrainingTask& task, std::span<const double> difficulty,
                                      const CurriculumSchedule& base, const TrainConfig& config,
                                      const std::vector<std::optional<int>>& grid) {
  if (grid.empty()) throw InvalidArgument("grid_search_m: empty grid");
  GridSearchResult out;
  auto smaller = [](std::optional<int> a, std::optional<int> b) { return a && (!b || *a < *b); };
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CurriculumSchedule schedule(grid[g], base.difficulty());
    auto result = train(task, difficulty, schedule, config);
    const double v = result.best_validation_value;
    out.rows.push_back({grid[g], v, std::move(result)});
    const auto& cur = out.rows[best];
    if (g > 0 && (v > cur.validation_value || (v == cur.validation_value && smaller(grid[g], cur.m)))) best = g;
  }
  out.best_m = out.rows[best].m;
  return out;
}

inline void write_history_csv(const std::vector<HistoryRow>& history, std::ostream& out) {
  out << "iteration,train_loss,mean_weight,valid_metric\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iteration, r.train_loss, r.mean_weight,
                  r.valid_metric);
    out << buf;
  }
}

}  // namespace curricula
