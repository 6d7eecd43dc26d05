// Synthetic right-censored DGPs with closed-form truth sidecars. Potential
// outcomes are exponential; the treated-arm rate is solved so the restricted
// mean difference equals the requested effect exactly, which makes the true
// CATE available for oracle tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/dataset.hpp"

namespace csurv {

enum class EffectShape : uint8_t { constant = 0, step = 1, linear = 2 };

struct SimulationSpec {
  size_t n = 1000;
  size_t p = 2;
  EffectShape effect = EffectShape::constant;
  double effect_a = 0;  // constant: tau = a; step: tau = a + b*1{x0 > 0.5}; linear: tau = a + b*x0
  double effect_b = 0;
  double baseline_rate = 0.01;  // exponential rate of T(0)
  double censoring_rate = 0;    // exponential rate of C; 0 = no censoring
  double treat_fraction = 0.5;
  double horizon = 720;
  uint64_t seed = 42;
};

struct SimulationResult {
  SurvivalDataset data;
  std::vector<double> true_cate;   // RMST difference at the horizon, exact
  std::vector<double> true_m0;     // E[min(T(0), h) | x]
  std::vector<double> true_m1;     // E[min(T(1), h) | x]
  std::vector<double> censor_prob; // P(D = 0 | x, w assigned)
  double true_ate = 0;
};

inline void validate(const SimulationSpec& spec) {
  if (spec.n < 2) throw ParamError("simulation needs n >= 2");
  if (spec.p < 1) throw ParamError("simulation needs p >= 1");
  if (!(spec.baseline_rate > 0)) throw ParamError("baseline rate must be positive");
  if (spec.censoring_rate < 0) throw ParamError("censoring rate must be nonnegative");
  if (!(spec.treat_fraction > 0 && spec.treat_fraction < 1))
    throw ParamError("treatment fraction must lie in (0, 1)");
  if (!(spec.horizon > 0)) throw ParamError("horizon must be positive");
}

// E[min(T, h)] for T ~ Exp(rate).
inline double rmst_exponential(double rate, double h) {
  return -std::expm1(-rate * h) / rate;
}

// Rate lambda with E[min(Exp(lambda), h)] = target, by bisection; target must
// lie strictly inside (0, h).
inline double rate_for_rmst(double target, double h) {
  if (!(target > 0 && target < h))
    throw ParamError("requested restricted mean " + std::to_string(target) +
                     " is not attainable inside (0, " + std::to_string(h) + ")");
  double lo = 1e-12, hi = 1.0;
  while (rmst_exponential(hi, h) > target) hi *= 2;
  while (rmst_exponential(lo, h) < target) lo /= 2;  // degenerate targets near h
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rmst_exponential(mid, h) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double effect_at(const SimulationSpec& spec, double x0) {
  switch (spec.effect) {
    case EffectShape::constant:
      return spec.effect_a;
    case EffectShape::step:
      return spec.effect_a + (x0 > 0.5 ? spec.effect_b : 0.0);
    case EffectShape::linear:
      return spec.effect_a + spec.effect_b * x0;
  }
  return spec.effect_a;
}

inline SimulationResult run_simulate(const SimulationSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  const double h = spec.horizon;
  const double m0 = rmst_exponential(spec.baseline_rate, h);

  SimulationResult out;
  std::vector<std::string> names(spec.p);
  for (size_t j = 0; j < spec.p; ++j) names[j] = "x" + std::to_string(j);
  out.data.x = Matrix(spec.n, names);
  out.data.y.resize(spec.n);
  out.data.w.resize(spec.n);
  out.data.d.resize(spec.n);
  out.true_cate.resize(spec.n);
  out.true_m0.assign(spec.n, m0);
  out.true_m1.resize(spec.n);
  out.censor_prob.resize(spec.n);

  const auto rate_for_effect = [&](double tau) {
    return tau == 0 ? spec.baseline_rate : rate_for_rmst(m0 + tau, h);
  };
  // constant and step effects need at most two distinct treated rates
  double rate1_flat = 0, rate1_step = 0;
  if (spec.effect == EffectShape::constant || spec.effect == EffectShape::step) {
    rate1_flat = rate_for_effect(spec.effect_a);
    if (spec.effect == EffectShape::step)
      rate1_step = rate_for_effect(spec.effect_a + spec.effect_b);
  }

  double ate_acc = 0;
  for (size_t i = 0; i < spec.n; ++i) {
    for (size_t j = 0; j < spec.p; ++j) out.data.x.at(i, j) = rng.uniform();
    const double x0 = out.data.x.at(i, 0);
    const double tau = effect_at(spec, x0);

    double rate1;
    if (spec.effect == EffectShape::constant) {
      rate1 = rate1_flat;
    } else if (spec.effect == EffectShape::step) {
      rate1 = x0 > 0.5 ? rate1_step : rate1_flat;
    } else {
      rate1 = rate_for_effect(tau);
    }

    const double w = rng.uniform() < spec.treat_fraction ? 1.0 : 0.0;
    const double t0 = rng.exponential(spec.baseline_rate);
    const double t1 = rng.exponential(rate1);
    const double t = w == 1.0 ? t1 : t0;
    double y = t, d = 1.0;
    if (spec.censoring_rate > 0) {
      const double c = rng.exponential(spec.censoring_rate);
      if (c < t) {
        y = c;
        d = 0.0;
      }
    }
    out.data.y[i] = y;
    out.data.w[i] = w;
    out.data.d[i] = d;
    out.true_cate[i] = tau;
    out.true_m1[i] = m0 + tau;
    const double arm_rate = w == 1.0 ? rate1 : spec.baseline_rate;
    out.censor_prob[i] =
        spec.censoring_rate > 0 ? spec.censoring_rate / (spec.censoring_rate + arm_rate) : 0.0;
    ate_acc += tau;
  }
  out.true_ate = ate_acc / static_cast<double>(spec.n);
  return out;
}

}  // namespace csurv
