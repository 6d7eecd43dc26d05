// Discrete-time survival curves: evaluation grids, the weighted product-limit
// estimator (exact, computed at full time resolution and evaluated onto the
// grid), and restricted-mean integration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "csurv/common.hpp"

namespace csurv {

struct TimeGrid {
  std::vector<double> points;  // strictly increasing; last point == horizon when finite

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double back() const { return points.back(); }
};

// Right-continuous nonincreasing step function on a grid; value 1 before the
// first grid point. Houses survival curves for both the event and censoring
// processes.
struct StepFunction {
  TimeGrid grid;
  std::vector<double> values;

  double at(double t) const {
    // value at the largest grid point <= t
    const auto& g = grid.points;
    const auto it = std::upper_bound(g.begin(), g.end(), t);
    if (it == g.begin()) return 1.0;
    return values[static_cast<size_t>(it - g.begin()) - 1];
  }

  double before(double t) const {
    // left limit: value at the largest grid point strictly below t
    const auto& g = grid.points;
    const auto it = std::lower_bound(g.begin(), g.end(), t);
    if (it == g.begin()) return 1.0;
    return values[static_cast<size_t>(it - g.begin()) - 1];
  }
};

// Grid over event times: the unique values when few, otherwise max_points
// equally spaced quantiles; the horizon is always the last point when finite.
inline TimeGrid make_time_grid(const std::vector<double>& times,
                               const std::vector<uint8_t>& events, double horizon,
                               size_t max_points = 50) {
  if (max_points < 1) throw ParamError("time grid needs max_points >= 1");
  const bool finite_h = std::isfinite(horizon);
  if (finite_h && !(horizon > 0)) throw ParamError("horizon must be positive");
  std::vector<double> ev;
  ev.reserve(times.size());
  for (size_t i = 0; i < times.size(); ++i)
    if (events[i]) ev.push_back(finite_h ? std::min(times[i], horizon) : times[i]);
  std::sort(ev.begin(), ev.end());

  TimeGrid grid;
  if (!ev.empty()) {
    std::vector<double> uniq(ev);
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const size_t budget = finite_h ? max_points - (max_points > 1 ? 1 : 0) : max_points;
    if (uniq.size() <= budget || budget == 0) {
      grid.points = std::move(uniq);
    } else {
      grid.points.reserve(budget);
      for (size_t j = 1; j <= budget; ++j) {
        const double p = static_cast<double>(j) / static_cast<double>(budget);
        const double idx = p * static_cast<double>(ev.size() - 1);
        const auto lo = static_cast<size_t>(idx);
        const double frac = idx - static_cast<double>(lo);
        const double q =
            lo + 1 < ev.size() ? ev[lo] + frac * (ev[lo + 1] - ev[lo]) : ev.back();
        grid.points.push_back(q);
      }
      grid.points.erase(std::unique(grid.points.begin(), grid.points.end()),
                        grid.points.end());
    }
  }
  if (finite_h) {
    while (!grid.points.empty() && grid.points.back() >= horizon) grid.points.pop_back();
    grid.points.push_back(horizon);
  }
  return grid;
}

namespace detail {

// Units ordered by time ascending (events before censorings at ties, a
// canonical order only; the at-risk set is {y >= t} either way).
inline std::vector<uint32_t> time_order(const std::vector<double>& times,
                                        const std::vector<uint8_t>& events) {
  std::vector<uint32_t> order(times.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    if (events[a] != events[b]) return events[a] > events[b];
    return a < b;
  });
  return order;
}

// Shared product-limit walk. Calls visit(t, survival_after_t) at each distinct
// observed time with positive remaining risk mass.
template <class Visit>
void product_limit_walk(const std::vector<uint32_t>& order, const std::vector<double>& times,
                        const uint8_t* events, const double* weights, Visit&& visit) {
  double at_risk = 0;
  for (uint32_t id : order) at_risk += weights[id];
  double surv = 1.0;
  size_t i = 0;
  const size_t n = order.size();
  while (i < n) {
    const double t = times[order[i]];
    double d = 0, leaving = 0;
    size_t j = i;
    for (; j < n && times[order[j]] == t; ++j) {
      const double wj = weights[order[j]];
      leaving += wj;
      if (events[order[j]]) d += wj;
    }
    if (at_risk > 0 && d > 0) {
      surv *= 1.0 - d / at_risk;
      if (surv < 0) surv = 0;  // fp guard
    }
    visit(t, surv);
    at_risk -= leaving;
    i = j;
  }
}

inline StepFunction product_limit_curve(const std::vector<uint32_t>& order,
                                        const std::vector<double>& times,
                                        const uint8_t* events, const double* weights,
                                        const TimeGrid& grid) {
  StepFunction fn;
  fn.grid = grid;
  fn.values.assign(grid.size(), 1.0);
  size_t k = 0;
  double last = 1.0;
  product_limit_walk(order, times, events, weights, [&](double t, double surv) {
    while (k < grid.size() && grid.points[k] < t) fn.values[k++] = last;
    last = surv;
  });
  while (k < grid.size()) fn.values[k++] = last;
  return fn;
}

// Survival value just before `cutoff` (the IPCW denominator form).
inline double product_limit_before(const std::vector<uint32_t>& order,
                                   const std::vector<double>& times, const uint8_t* events,
                                   const double* weights, double cutoff) {
  double out = 1.0;
  product_limit_walk(order, times, events, weights, [&](double t, double surv) {
    if (t < cutoff) out = surv;
  });
  return out;
}

}  // namespace detail

inline StepFunction kaplan_meier(const std::vector<double>& times,
                                 const std::vector<uint8_t>& events,
                                 const std::vector<double>& weights, const TimeGrid& grid) {
  if (times.size() != events.size() || times.size() != weights.size())
    throw ParamError("kaplan_meier inputs must have equal length");
  double total = 0;
  for (double w : weights) {
    if (w < 0) throw ParamError("negative sample weight");
    total += w;
  }
  if (!(total > 0)) throw ParamError("kaplan_meier needs positive total weight");
  const auto order = detail::time_order(times, events);
  return detail::product_limit_curve(order, times, events.data(), weights.data(), grid);
}

// Censoring-process curve: same product limit with the event roles swapped.
inline StepFunction censoring_km(const std::vector<double>& times,
                                 const std::vector<uint8_t>& d,
                                 const std::vector<double>& weights, const TimeGrid& grid) {
  std::vector<uint8_t> cens(d.size());
  for (size_t i = 0; i < d.size(); ++i) cens[i] = d[i] ? 0 : 1;
  return kaplan_meier(times, cens, weights, grid);
}

// Exact area under the step function on [0, h].
inline double rmst(const StepFunction& curve, double h) {
  if (!(h > 0)) throw ParamError("rmst horizon must be positive");
  double area = 0, prev_t = 0, prev_v = 1.0;
  for (size_t k = 0; k < curve.grid.size(); ++k) {
    const double t = std::min(curve.grid.points[k], h);
    if (t > prev_t) {
      area += prev_v * (t - prev_t);
      prev_t = t;
    }
    prev_v = curve.values[k];
    if (curve.grid.points[k] >= h) break;
  }
  if (prev_t < h) area += prev_v * (h - prev_t);
  return area;
}

}  // namespace csurv
