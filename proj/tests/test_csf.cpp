#include <gtest/gtest.h>

#include <cmath>

#include "csurv/csf.hpp"
#include "csurv/inference.hpp"
#include "csurv/serialize.hpp"
#include "csurv/simulate.hpp"

using namespace csurv;

namespace {

CsfParams fast_params(uint64_t seed = 42) {
  CsfParams prm;
  prm.horizon = 720;
  prm.w_hat_mode = WHatMode::auto_mean;
  prm.censoring_model = CensoringModel::km;
  prm.outcome_forest.num_trees = 100;
  prm.censoring_forest.num_trees = 100;
  prm.propensity_forest.num_trees = 100;
  prm.cate_forest.num_trees = 200;
  prm.seed = seed;
  return prm;
}

SimulationSpec rct_spec(double tau, double censoring, size_t n, uint64_t seed) {
  SimulationSpec spec;
  spec.n = n;
  spec.p = 2;
  spec.effect = EffectShape::constant;
  spec.effect_a = tau;
  spec.baseline_rate = 0.01;
  spec.censoring_rate = censoring;
  spec.treat_fraction = 0.4;
  spec.horizon = 720;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(MakeOutcome, TargetsMatchDefinitions) {
  SurvivalDataset ds;
  ds.y = {300, 800, 300};
  ds.w = {0, 1, 1};
  ds.d = {1, 0, 1};
  ds.x = Matrix(3, {"x0"});
  const auto trunc = truncate(ds, 720);
  const auto u_rmst = make_outcome(trunc, Target::rmst, ds.y);
  EXPECT_DOUBLE_EQ(u_rmst[0], 300);
  EXPECT_DOUBLE_EQ(u_rmst[1], 720);
  const auto u_sp = make_outcome(trunc, Target::survival_probability, ds.y);
  EXPECT_DOUBLE_EQ(u_sp[0], 0);  // event before horizon
  EXPECT_DOUBLE_EQ(u_sp[1], 1);  // survived past horizon
  EXPECT_DOUBLE_EQ(u_sp[2], 0);
}

TEST(IpcwWeights, ReciprocalWithFloor) {
  TruncatedOutcome trunc;
  trunc.u = {100, 100, 100, 50};
  trunc.dh = {1, 1, 1, 0};
  trunc.h = 720;
  const auto w = ipcw_weights(trunc, {1.0, 0.5, 0.01, 0.9}, 0.05);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 2.0);
  EXPECT_DOUBLE_EQ(w[2], 20.0);  // floored at 0.05
  EXPECT_DOUBLE_EQ(w[3], 0.0);   // incomplete case

  EXPECT_THROW(ipcw_weights(trunc, {1.0, 0.5, 0.0, 0.9}, 0.05), ParamError);
  EXPECT_THROW(ipcw_weights(trunc, {1.0, 0.5, 0.1, 0.9}, 0.0), ParamError);
}

TEST(CsfFit, ConstantPropensityPassesThrough) {
  auto sim = run_simulate(rct_spec(5, 0.002, 400, 3));
  auto prm = fast_params();
  prm.w_hat_mode = WHatMode::constant;
  prm.w_hat_value = 0.4;
  const auto model = fit(sim.data, prm, 1);
  for (double e : model.nuisances.e_hat) EXPECT_DOUBLE_EQ(e, 0.4);
  EXPECT_FALSE(model.propensity_forest.has_value());
}

TEST(CsfFit, OmegaZeroExactlyForIncompleteCases) {
  auto sim = run_simulate(rct_spec(5, 0.003, 800, 5));
  const auto model = fit(sim.data, fast_params(), 1);
  for (size_t i = 0; i < model.size(); ++i) {
    EXPECT_EQ(model.ipcw[i] > 0, model.dh[i] == 1);
    if (model.dh[i]) EXPECT_LE(model.ipcw[i], 1.0 / model.params.g_floor + 1e-12);
  }
}

TEST(CsfFit, NoCensoringGivesUnitWeights) {
  auto sim = run_simulate(rct_spec(5, 0.0, 300, 7));
  const auto model = fit(sim.data, fast_params(), 1);
  for (size_t i = 0; i < model.size(); ++i) EXPECT_DOUBLE_EQ(model.ipcw[i], 1.0);
}

TEST(CsfFit, ZeroCensoringRctRecoversConstantEffect) {
  auto sim = run_simulate(rct_spec(5, 0.0, 4000, 11));
  auto prm = fast_params(8);
  prm.cate_forest.num_trees = 500;
  prm.outcome_forest.num_trees = 300;
  const auto model = fit(sim.data, prm, 1);
  EXPECT_NEAR(mean_of(model.tau_oob), 5.0, 0.5);
}

TEST(CsfFit, NullEffectCenteredAtZero) {
  auto sim = run_simulate(rct_spec(0, 0.002, 3000, 13));
  auto prm = fast_params(21);
  prm.cate_forest.num_trees = 400;
  const auto model = fit(sim.data, prm, 1);
  const double m = mean_of(model.tau_oob);
  const double sem = sample_sd(model.tau_oob) / std::sqrt(static_cast<double>(model.size()));
  // the mean of correlated OOB estimates: allow a generous multiple
  EXPECT_LT(std::fabs(m), 20 * sem + 1.0);
}

TEST(CsfFit, RmstTargetKeepsTauInRange) {
  auto sim = run_simulate(rct_spec(5, 0.004, 2000, 17));
  const auto model = fit(sim.data, fast_params(31), 1);
  for (double t : model.tau_oob) {
    EXPECT_GT(t, -720.0);
    EXPECT_LT(t, 720.0);
  }
}

TEST(CsfFit, SurvivalProbabilityTargetKeepsTauInRange) {
  auto sim = run_simulate(rct_spec(40, 0.002, 2000, 19));
  auto prm = fast_params(33);
  prm.target = Target::survival_probability;
  const auto model = fit(sim.data, prm, 1);
  for (double t : model.tau_oob) {
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
  }
  for (double m : model.nuisances.m_hat) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(CsfFit, AllIncompleteIsAnError) {
  // a dataset where every unit is censored before the horizon can only reach
  // fit() unvalidated; fit must still refuse it cleanly
  SurvivalDataset ds;
  const size_t n = 20;
  ds.x = Matrix(n, {"x0"});
  for (size_t i = 0; i < n; ++i) {
    ds.x.at(i, 0) = static_cast<double>(i);
    ds.y.push_back(10 + static_cast<double>(i));
    ds.w.push_back(i % 2 ? 1.0 : 0.0);
    ds.d.push_back(0.0);
  }
  EXPECT_THROW(validate(ds), ParamError);  // rejected up front: no events
  CsfParams prm = fast_params();
  prm.horizon = 2000;  // no y reaches it, so every dh is zero
  EXPECT_THROW(fit(ds, prm, 1), ParamError);
}

TEST(CsfFit, DeterministicModelHashAcrossThreads) {
  auto sim = run_simulate(rct_spec(5, 0.003, 1200, 23));
  const auto m1 = fit(sim.data, fast_params(77), 1);
  const auto m2 = fit(sim.data, fast_params(77), 3);
  const auto m4 = fit(sim.data, fast_params(77), 4);
  const auto h1 = model_hash(m1);
  EXPECT_EQ(h1, model_hash(m2));
  EXPECT_EQ(h1, model_hash(m4));
}

TEST(CsfFit, ModelRoundTripIsLossless) {
  auto sim = run_simulate(rct_spec(5, 0.003, 600, 29));
  auto prm = fast_params(5);
  prm.censoring_model = CensoringModel::forest;
  const auto model = fit(sim.data, prm, 1);
  const auto bytes = serialize_model(model);
  const auto loaded = deserialize_model(bytes);
  EXPECT_EQ(serialize_model(loaded), bytes);
  const auto p1 = predict_cate(model, sim.data.x, 1);
  const auto p2 = predict_cate(loaded, sim.data.x, 1);
  for (size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], p2[i]);
}

TEST(CsfPredict, ColumnMismatchRefused) {
  auto sim = run_simulate(rct_spec(5, 0.002, 400, 31));
  const auto model = fit(sim.data, fast_params(), 1);
  Matrix wrong(10, {"a", "b", "c"});
  EXPECT_THROW(predict_cate(model, wrong), ParamError);
}

TEST(PseudoOutcome, ParentSumIsZeroAndPerfectFitHasNoGain) {
  // construct residuals with U~ = tau * W~ exactly: every rho is zero
  const size_t n = 40;
  std::vector<double> wres(n), ures(n), omega(n, 1.0);
  Rng rng(7);
  for (size_t i = 0; i < n; ++i) {
    wres[i] = rng.uniform() < 0.4 ? 0.6 : -0.4;
    ures[i] = 3.0 * wres[i];
  }
  detail::CausalSplitter splitter(wres.data(), ures.data(), omega.data(), n, 0.05);
  std::vector<uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  ASSERT_TRUE(splitter.node_init(ids.data(), n));
  splitter.feature_reset();
  double best = -1;
  for (size_t i = 0; i + 1 < n; ++i) {
    splitter.push_left(ids[i]);
    best = std::max(best, splitter.gain());
  }
  EXPECT_LE(best, splitter.min_gain());  // no split gain anywhere
}

TEST(PseudoOutcome, WeightedParentSumVanishes) {
  const size_t n = 60;
  std::vector<double> wres(n), ures(n), omega(n);
  Rng rng(17);
  for (size_t i = 0; i < n; ++i) {
    wres[i] = rng.uniform() - 0.3;
    ures[i] = 10 * rng.uniform() - 4;
    omega[i] = 0.5 + rng.uniform();
  }
  // recompute rho exactly as the splitter defines it and check sum w*rho == 0
  double sw = 0, sww = 0, swu = 0;
  for (size_t i = 0; i < n; ++i) {
    sw += omega[i];
    sww += omega[i] * wres[i] * wres[i];
    swu += omega[i] * wres[i] * ures[i];
  }
  const double tau_parent = swu / sww, vbar = sww / sw;
  double acc = 0;
  for (size_t i = 0; i < n; ++i)
    acc += omega[i] * wres[i] * (ures[i] - wres[i] * tau_parent) / vbar;
  EXPECT_NEAR(acc, 0.0, 1e-9 * sw);
}

TEST(PseudoOutcome, SignFlipNegatesRhoExactly) {
  const size_t n = 30;
  std::vector<double> wres(n), nres(n), ures(n), omega(n, 1.0);
  Rng rng(27);
  for (size_t i = 0; i < n; ++i) {
    wres[i] = rng.uniform() - 0.5;
    nres[i] = -wres[i];
    ures[i] = 5 * rng.uniform();
  }
  double sww = 0, swu = 0, sw = static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    sww += wres[i] * wres[i];
    swu += wres[i] * ures[i];
  }
  const double tau = swu / sww, vbar = sww / sw;
  for (size_t i = 0; i < n; ++i) {
    const double rho = wres[i] * (ures[i] - wres[i] * tau) / vbar;
    const double tau_n = (-swu) / sww;
    const double rho_n = nres[i] * (ures[i] - nres[i] * tau_n) / vbar;
    EXPECT_DOUBLE_EQ(rho_n, -rho);
  }
}

TEST(CausalSplit, SeparatesTwoEffectGroups) {
  // tau in {0, 10}, step at x0 = 0.5; short-tailed outcomes keep the noise
  // low so the first split should find the boundary in most trees
  SimulationSpec spec;
  spec.n = 2000;
  spec.p = 2;
  spec.effect = EffectShape::step;
  spec.effect_a = 0;
  spec.effect_b = 10;
  spec.baseline_rate = 1.0 / 30;
  spec.censoring_rate = 0;
  spec.treat_fraction = 0.5;
  spec.horizon = 200;
  spec.seed = 103;
  auto sim = run_simulate(spec);
  CsfParams prm;
  prm.horizon = 200;
  prm.w_hat_mode = WHatMode::auto_mean;
  prm.censoring_model = CensoringModel::km;
  prm.outcome_forest.num_trees = 300;
  prm.cate_forest.num_trees = 300;
  prm.cate_forest.min_node_size = 15;
  prm.seed = 5;
  const auto model = fit(sim.data, prm, 1);
  size_t root_on_boundary = 0, with_split = 0;
  for (const auto& tree : model.final_forest.trees) {
    if (tree.feature[0] < 0) continue;
    ++with_split;
    if (tree.feature[0] == 0 && tree.threshold[0] > 0.3 && tree.threshold[0] < 0.7)
      ++root_on_boundary;
  }
  ASSERT_GT(with_split, 0u);
  EXPECT_GT(static_cast<double>(root_on_boundary) / static_cast<double>(with_split), 0.5);
  // and the fitted groups separate
  double lo = 0, hi = 0;
  size_t nlo = 0, nhi = 0;
  for (size_t i = 0; i < sim.data.n(); ++i) {
    if (sim.true_cate[i] > 0) {
      hi += model.tau_oob[i];
      ++nhi;
    } else {
      lo += model.tau_oob[i];
      ++nlo;
    }
  }
  EXPECT_GT(hi / static_cast<double>(nhi), lo / static_cast<double>(nlo) + 3.0);
}
