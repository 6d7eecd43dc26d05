// Survival forests: log-rank splitting on a quantile time grid, with
// forest-kernel weighted product-limit prediction (the same estimator as
// kaplan_meier run on the kernel weights).
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/forest.hpp"
#include "csurv/stepfunction.hpp"

namespace csurv {

namespace detail {
// Grid bin per unit: index of the first grid point >= time, grid.size() when
// the time lies beyond the grid (at risk throughout, never an in-grid event).
inline std::vector<uint32_t> grid_bins(const TimeGrid& grid, const std::vector<double>& times) {
  std::vector<uint32_t> bins(times.size());
  for (size_t i = 0; i < times.size(); ++i) {
    const auto it = std::lower_bound(grid.points.begin(), grid.points.end(), times[i]);
    bins[i] = static_cast<uint32_t>(it - grid.points.begin());
  }
  return bins;
}
}  // namespace detail

// `events` marks the process being modeled (pass 1-d to model censoring).
inline Forest fit_survival_forest(const Matrix& x, const std::vector<double>& times,
                                  const std::vector<uint8_t>& events,
                                  const ForestParams& params,
                                  double horizon = std::numeric_limits<double>::infinity(),
                                  size_t grid_max_points = 50, unsigned num_threads = 0) {
  if (times.size() != x.rows() || events.size() != x.rows())
    throw ParamError("survival forest inputs must have n rows");
  const TimeGrid grid = make_time_grid(times, events, horizon, grid_max_points);
  const auto bins = detail::grid_bins(grid, times);
  const std::vector<double> ones(x.rows(), 1.0);
  Forest forest = detail::grow_forest(
      x, params, LabelKind::survival, ones, ones,
      [&] {
        return detail::SurvivalSplitter(bins.data(), events.data(), ones.data(),
                                        grid.size(), params.alpha);
      },
      num_threads);
  forest.grid = grid;
  forest.surv_time = times;
  forest.surv_event = events;
  return forest;
}

namespace detail {

inline void accumulate_leaf_kernel(const Forest& forest, const Tree& tree, int32_t node,
                                   std::vector<double>& alpha) {
  const auto k = static_cast<size_t>(node);
  const int32_t b = tree.mem_begin[k], e = tree.mem_end[k];
  double total = 0;
  for (int32_t i = b; i < e; ++i) total += forest.sample_weights[tree.members[i]];
  if (!(total > 0)) return;
  for (int32_t i = b; i < e; ++i) {
    const uint32_t id = tree.members[i];
    alpha[id] += forest.sample_weights[id] / total;
  }
}

// Kernel weights at (m, row); oob_unit >= 0 restricts to trees where that
// training unit is out of bag. Returns the number of trees used.
inline size_t survival_kernel(const Forest& forest, const Matrix& m, size_t row,
                              int64_t oob_unit, std::vector<double>& alpha) {
  alpha.assign(forest.n_train, 0.0);
  size_t used = 0;
  for (const auto& tree : forest.trees) {
    if (oob_unit >= 0 && tree.is_inbag(static_cast<uint32_t>(oob_unit))) continue;
    accumulate_leaf_kernel(forest, tree, tree.leaf_for(m, row), alpha);
    ++used;
  }
  if (used == 0) {  // in-bag everywhere: fall back to the full forest
    for (const auto& tree : forest.trees) {
      accumulate_leaf_kernel(forest, tree, tree.leaf_for(m, row), alpha);
      ++used;
    }
  }
  return used;
}

}  // namespace detail

inline StepFunction predict_survival(const Forest& forest, const Matrix& m, size_t row) {
  if (forest.kind != LabelKind::survival)
    throw ParamError("predict_survival expects a survival forest");
  if (m.cols() != forest.p) throw ParamError("prediction column mismatch");
  std::vector<double> alpha;
  detail::survival_kernel(forest, m, row, -1, alpha);
  const auto order = detail::time_order(forest.surv_time, forest.surv_event);
  return detail::product_limit_curve(order, forest.surv_time, forest.surv_event.data(),
                                     alpha.data(), forest.grid);
}

inline StepFunction predict_survival_oob(const Forest& forest, const Matrix& m, size_t row) {
  if (forest.kind != LabelKind::survival)
    throw ParamError("predict_survival expects a survival forest");
  std::vector<double> alpha;
  detail::survival_kernel(forest, m, row, static_cast<int64_t>(row), alpha);
  const auto order = detail::time_order(forest.surv_time, forest.surv_event);
  return detail::product_limit_curve(order, forest.surv_time, forest.surv_event.data(),
                                     alpha.data(), forest.grid);
}

// Exact left-limit survival values S(cutoff- | x_i) for every training row,
// OOB, at full time resolution. This is the IPCW denominator path; it avoids
// grid rounding and reuses one time ordering across units.
inline std::vector<double> predict_survival_before_oob(const Forest& forest,
                                                       const Matrix& x_train,
                                                       const std::vector<double>& cutoffs,
                                                       unsigned num_threads = 0) {
  if (forest.kind != LabelKind::survival)
    throw ParamError("predict_survival expects a survival forest");
  if (x_train.rows() != forest.n_train || cutoffs.size() != forest.n_train)
    throw ParamError("predict_survival_before_oob needs the training matrix");
  const auto order = detail::time_order(forest.surv_time, forest.surv_event);
  std::vector<double> out(forest.n_train, 1.0);
  if (num_threads == 0) num_threads = default_thread_count();
  std::vector<std::vector<double>> buffers(num_threads);
  parallel_for(forest.n_train, num_threads, [&](size_t i, unsigned worker) {
    auto& alpha = buffers[worker];
    detail::survival_kernel(forest, x_train, i, static_cast<int64_t>(i), alpha);
    out[i] = detail::product_limit_before(order, forest.surv_time,
                                          forest.surv_event.data(), alpha.data(),
                                          cutoffs[i]);
  });
  return out;
}

}  // namespace csurv
