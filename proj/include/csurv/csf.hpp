// The causal survival forest pipeline: nuisance estimation (propensity,
// censoring survival, conditional outcome mean), IPCW complete-case weights,
// orthogonal residualization, the gradient-split final forest, and CATE
// prediction. Censoring is modeled conditional on covariates AND treatment;
// all nuisance values entering residuals are out-of-bag.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/dataset.hpp"
#include "csurv/forest.hpp"
#include "csurv/stepfunction.hpp"
#include "csurv/survival.hpp"

namespace csurv {

enum class Target : uint8_t { rmst = 0, survival_probability = 1 };
enum class CensoringModel : uint8_t { km = 0, forest = 1 };
enum class WHatMode : uint8_t { constant = 0, auto_mean = 1, estimate = 2 };

inline ForestParams nuisance_forest_defaults() {
  ForestParams p;
  p.num_trees = 500;
  return p;
}

inline ForestParams censoring_forest_defaults() {
  ForestParams p;
  p.num_trees = 500;
  p.min_node_size = 15;  // survival-curve nuisances want smoother leaves
  return p;
}

inline ForestParams cate_forest_defaults() {
  ForestParams p;
  p.min_node_size = 25;  // kernel CATE ratios need wider neighborhoods than
                         // plain regression leaves
  return p;
}

struct CsfParams {
  double horizon = 0;
  Target target = Target::rmst;
  WHatMode w_hat_mode = WHatMode::estimate;
  double w_hat_value = 0.5;  // used when w_hat_mode == constant
  // Stratified product-limit censoring by default: with a plain IPCW score,
  // conditional-forest noise in G enters the weights linearly and degrades
  // the CATE kernel; the forest model remains available per arm.
  CensoringModel censoring_model = CensoringModel::km;
  double g_floor = 0.05;
  ForestParams propensity_forest = nuisance_forest_defaults();
  ForestParams censoring_forest = censoring_forest_defaults();
  ForestParams outcome_forest = nuisance_forest_defaults();
  ForestParams cate_forest = cate_forest_defaults();  // 2000 trees
  size_t grid_max_points = 50;
  uint64_t seed = 42;
};

inline void validate(const CsfParams& p) {
  if (!(p.horizon > 0)) throw ParamError("horizon must be positive");
  if (!(p.g_floor > 0 && p.g_floor <= 1)) throw ParamError("g_floor must lie in (0, 1]");
  if (p.w_hat_mode == WHatMode::constant && !(p.w_hat_value > 0 && p.w_hat_value < 1))
    throw ParamError("constant w_hat must lie in (0, 1)");
  if (p.grid_max_points < 1) throw ParamError("grid_max_points must be positive");
}

struct NuisanceSet {
  std::vector<double> e_hat;       // propensity, in (0,1)
  std::vector<double> m_hat;       // OOB conditional mean of U
  std::vector<double> g_hat_at_u;  // floored censoring survival G(min(y,h)- | x, w)
  double min_g_before_floor = 1.0;
  size_t floored_count = 0;
};

struct CsfDiagnostics {
  size_t n = 0, p = 0;
  double censoring_rate = 0;   // share with d = 0
  double incomplete_rate = 0;  // share with dh = 0
  double min_g_before_floor = 1.0;
  size_t floored_count = 0;
  size_t overlap_violations = 0;  // e_hat outside [0.01, 0.99]
  bool overlap_warning = false;   // violations exceed 1% of units
  size_t oob_fallback_outcome = 0;
  size_t oob_fallback_cate = 0;
  double mean_u_residual = 0, sd_u_residual = 0;
  double mean_w_residual = 0, sd_w_residual = 0;
};

struct CsfModel {
  CsfParams params;
  NuisanceSet nuisances;
  std::vector<double> u_outcome;  // U (u for rmst, 1{y > h} for survival prob.)
  std::vector<uint8_t> dh;        // complete-case indicator at horizon
  std::vector<double> w;          // treatment as fitted (post relabeling)
  std::vector<double> ipcw;       // omega
  std::vector<double> wres, ures;  // W tilde, U tilde
  Forest final_forest;
  std::optional<Forest> propensity_forest;
  std::optional<Forest> censoring_forest;          // treated arm (or the only one)
  std::optional<Forest> censoring_forest_control;  // control arm
  Forest outcome_forest;
  std::vector<double> tau_oob;  // cached OOB CATE estimates
  CsfDiagnostics diagnostics;
  // training fingerprint
  uint32_t n = 0, p = 0;
  std::vector<std::string> column_names;
  uint64_t data_fingerprint = 0;

  size_t size() const { return u_outcome.size(); }
};

inline std::vector<double> make_outcome(const TruncatedOutcome& trunc, Target target,
                                        const std::vector<double>& y) {
  std::vector<double> u(trunc.u.size());
  if (target == Target::rmst) {
    u = trunc.u;
  } else {
    // survival probability: 1{y > h}; meaningful on complete cases, and
    // incomplete cases carry zero IPCW weight.
    for (size_t i = 0; i < y.size(); ++i) u[i] = y[i] > trunc.h ? 1.0 : 0.0;
  }
  return u;
}

inline std::vector<double> ipcw_weights(const TruncatedOutcome& trunc,
                                        const std::vector<double>& g_hat_at_u,
                                        double g_floor) {
  if (!(g_floor > 0 && g_floor <= 1)) throw ParamError("g_floor must lie in (0, 1]");
  std::vector<double> omega(trunc.u.size(), 0.0);
  for (size_t i = 0; i < omega.size(); ++i) {
    if (!trunc.dh[i]) continue;
    const double g = g_hat_at_u[i];
    if (!(g > 0 && g <= 1)) throw ParamError("censoring survival must lie in (0, 1]");
    omega[i] = 1.0 / std::max(g, g_floor);
  }
  return omega;
}

namespace detail {

inline uint64_t derived_seed(uint64_t seed, uint64_t role) {
  uint64_t s = seed ^ (0xA0761D6478BD642FULL * (role + 1));
  return splitmix64_next(s);
}

// The kernel CATE ratio at one point, accumulated from per-leaf sums.
// oob_unit >= 0 limits to trees where that unit is out-of-bag; when it is
// in-bag everywhere the full forest is used and *fallback is set.
inline double cate_kernel_ratio(const Forest& forest, const Matrix& m, size_t row,
                                int64_t oob_unit, bool* fallback = nullptr) {
  double num = 0, den = 0;
  size_t used = 0;
  for (int pass = 0; pass < 2 && used == 0; ++pass) {
    const bool filter = pass == 0 && oob_unit >= 0;
    if (pass == 1 && fallback) *fallback = true;
    for (const auto& tree : forest.trees) {
      if (filter && tree.is_inbag(static_cast<uint32_t>(oob_unit))) continue;
      const auto node = static_cast<size_t>(tree.leaf_for(m, row));
      const double cnt = static_cast<double>(tree.mem_end[node] - tree.mem_begin[node]);
      if (!(cnt > 0)) continue;
      num += tree.leaf_a[node] / cnt;
      den += tree.leaf_b[node] / cnt;
      ++used;
    }
    if (oob_unit < 0) break;
  }
  if (!(std::fabs(den) > 1e-12 * static_cast<double>(used)))
    throw PredictionError("undefined CATE prediction: treatment-residual mass below 1e-12");
  return num / den;
}

}  // namespace detail

inline CsfModel fit(const SurvivalDataset& ds, const CsfParams& params,
                    unsigned num_threads = 0) {
  validate(params);
  const size_t n = ds.n();

  CsfModel model;
  model.params = params;
  model.n = static_cast<uint32_t>(n);
  model.p = static_cast<uint32_t>(ds.p());
  model.column_names = ds.x.names();
  model.data_fingerprint = dataset_fingerprint(ds);
  model.w = ds.w;

  const TruncatedOutcome trunc = truncate(ds, params.horizon);
  model.dh = trunc.dh;
  model.u_outcome = make_outcome(trunc, params.target, ds.y);

  auto& diag = model.diagnostics;
  diag.n = n;
  diag.p = ds.p();
  {
    size_t censored = 0, incomplete = 0;
    for (size_t i = 0; i < n; ++i) {
      censored += ds.d[i] == 0.0;
      incomplete += trunc.dh[i] == 0;
    }
    diag.censoring_rate = static_cast<double>(censored) / static_cast<double>(n);
    diag.incomplete_rate = static_cast<double>(incomplete) / static_cast<double>(n);
  }

  // (1) Propensity.
  auto& nui = model.nuisances;
  if (params.w_hat_mode == WHatMode::constant) {
    nui.e_hat.assign(n, params.w_hat_value);
  } else if (params.w_hat_mode == WHatMode::auto_mean) {
    nui.e_hat.assign(n, mean_of(ds.w));
  } else {
    ForestParams eprm = params.propensity_forest;
    eprm.seed = detail::derived_seed(params.seed, 1);
    Forest ef = fit_regression_forest(ds.x, ds.w, eprm, num_threads);
    nui.e_hat = oob_predict(ef, ds.x, nullptr, num_threads);
    model.propensity_forest = std::move(ef);
  }
  for (double e : nui.e_hat)
    if (!(e > 0 && e < 1))
      throw ParamError("estimated propensity left (0, 1); check treatment overlap");
  for (double e : nui.e_hat) diag.overlap_violations += (e < 0.01 || e > 0.99);
  diag.overlap_warning =
      static_cast<double>(diag.overlap_violations) > 0.01 * static_cast<double>(n);

  // (2) Censoring survival at u-, conditional on (x, w), and IPCW weights.
  std::vector<uint8_t> cens_event(n);
  bool any_censoring = false;
  for (size_t i = 0; i < n; ++i) {
    cens_event[i] = ds.d[i] == 0.0 ? 1 : 0;
    any_censoring |= cens_event[i] != 0;
  }
  // Censoring is ignorable given covariates and treatment, so the censoring
  // survival is always estimated within treatment arm.
  std::vector<double> g_raw(n, 1.0);
  if (any_censoring) {
    if (params.censoring_model == CensoringModel::km) {
      // arm-stratified marginal product limit
      const auto order = detail::time_order(ds.y, cens_event);
      for (int arm = 0; arm <= 1; ++arm) {
        std::vector<double> weights(n, 0.0);
        for (size_t i = 0; i < n; ++i) weights[i] = ds.w[i] == arm ? 1.0 : 0.0;
        for (size_t i = 0; i < n; ++i)
          if (ds.w[i] == arm)
            g_raw[i] = detail::product_limit_before(order, ds.y, cens_event.data(),
                                                    weights.data(), trunc.u[i]);
      }
    } else {
      // one survival forest per arm
      for (int arm = 0; arm <= 1; ++arm) {
        std::vector<uint32_t> rows;
        for (uint32_t i = 0; i < n; ++i)
          if (ds.w[i] == arm) rows.push_back(i);
        Matrix xa(rows.size(), ds.x.names());
        std::vector<double> ya(rows.size()), cuts(rows.size());
        std::vector<uint8_t> ca(rows.size());
        bool arm_censoring = false;
        for (size_t k = 0; k < rows.size(); ++k) {
          for (size_t j = 0; j < ds.p(); ++j) xa.at(k, j) = ds.x.at(rows[k], j);
          ya[k] = ds.y[rows[k]];
          ca[k] = cens_event[rows[k]];
          cuts[k] = trunc.u[rows[k]];
          arm_censoring |= ca[k] != 0;
        }
        if (!arm_censoring) continue;  // G == 1 within this arm
        ForestParams gprm = params.censoring_forest;
        gprm.seed = detail::derived_seed(params.seed, 2 + static_cast<uint64_t>(arm) * 16);
        Forest gf = fit_survival_forest(xa, ya, ca, gprm, params.horizon,
                                        params.grid_max_points, num_threads);
        const auto ga = predict_survival_before_oob(gf, xa, cuts, num_threads);
        for (size_t k = 0; k < rows.size(); ++k) g_raw[rows[k]] = ga[k];
        if (arm == 1)
          model.censoring_forest = std::move(gf);
        else
          model.censoring_forest_control = std::move(gf);
      }
    }
  }
  nui.min_g_before_floor = 1.0;
  nui.g_hat_at_u.assign(n, 1.0);
  for (size_t i = 0; i < n; ++i) {
    double g = std::min(std::max(g_raw[i], 0.0), 1.0);
    if (trunc.dh[i]) {
      nui.min_g_before_floor = std::min(nui.min_g_before_floor, g);
      if (g < params.g_floor) ++nui.floored_count;
    }
    nui.g_hat_at_u[i] = std::max(g, params.g_floor);
  }
  diag.min_g_before_floor = nui.min_g_before_floor;
  diag.floored_count = nui.floored_count;
  model.ipcw = ipcw_weights(trunc, nui.g_hat_at_u, params.g_floor);
  {
    double total = 0;
    for (double o : model.ipcw) total += o;
    if (!(total > 0))
      throw ParamError("all units are incomplete at the horizon; cannot fit");
  }

  // (3) Conditional outcome mean, OOB, on IPCW-weighted complete cases.
  {
    ForestParams mprm = params.outcome_forest;
    mprm.seed = detail::derived_seed(params.seed, 3);
    Forest mf = fit_regression_forest(ds.x, model.u_outcome, model.ipcw, mprm, num_threads);
    nui.m_hat = oob_predict(mf, ds.x, &diag.oob_fallback_outcome, num_threads);
    model.outcome_forest = std::move(mf);
  }

  // (4) Orthogonal residuals.
  model.ures.resize(n);
  model.wres.resize(n);
  for (size_t i = 0; i < n; ++i) {
    model.ures[i] = model.u_outcome[i] - nui.m_hat[i];
    model.wres[i] = ds.w[i] - nui.e_hat[i];
  }
  diag.mean_u_residual = mean_of(model.ures);
  diag.sd_u_residual = sample_sd(model.ures);
  diag.mean_w_residual = mean_of(model.wres);
  diag.sd_w_residual = sample_sd(model.wres);

  // (5) Final forest on complete cases, gradient pseudo-outcome splits.
  {
    ForestParams cprm = params.cate_forest;
    cprm.seed = detail::derived_seed(params.seed, 4);
    const std::vector<double> ones(n, 1.0);
    Forest cf = detail::grow_forest(
        ds.x, cprm, LabelKind::causal, model.ipcw, ones,
        [&] {
          return detail::CausalSplitter(model.wres.data(), model.ures.data(),
                                        model.ipcw.data(), n, cprm.alpha);
        },
        num_threads);
    cf.cz_wres = model.wres;
    cf.cz_ures = model.ures;
    cf.cz_omega = model.ipcw;
    model.final_forest = std::move(cf);
  }

  // (6) OOB CATE estimates.
  model.tau_oob.assign(n, 0.0);
  std::atomic<size_t> cate_fallbacks{0};
  parallel_for(n, num_threads, [&](size_t i, unsigned) {
    bool fell_back = false;
    model.tau_oob[i] = detail::cate_kernel_ratio(model.final_forest, ds.x, i,
                                                 static_cast<int64_t>(i), &fell_back);
    if (fell_back) cate_fallbacks.fetch_add(1);
  });
  diag.oob_fallback_cate = cate_fallbacks.load();

  return model;
}

inline std::vector<double> predict_cate(const CsfModel& model, const Matrix& x_new,
                                        unsigned num_threads = 0) {
  if (x_new.cols() != model.p)
    throw ParamError("prediction data has " + std::to_string(x_new.cols()) +
                     " columns, model was trained with " + std::to_string(model.p));
  std::vector<double> out(x_new.rows(), 0.0);
  parallel_for(x_new.rows(), num_threads, [&](size_t i, unsigned) {
    out[i] = detail::cate_kernel_ratio(model.final_forest, x_new, i, -1);
  });
  return out;
}

inline const std::vector<double>& predict_cate_oob(const CsfModel& model) {
  return model.tau_oob;
}

}  // namespace csurv
