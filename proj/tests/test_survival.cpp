#include <gtest/gtest.h>

#include <cmath>

#include "csurv/stepfunction.hpp"
#include "csurv/survival.hpp"
#include "oracles.hpp"

using namespace csurv;

namespace {
TimeGrid grid_of(std::vector<double> pts) {
  TimeGrid g;
  g.points = std::move(pts);
  return g;
}
}  // namespace

TEST(KaplanMeier, HandComputedCurve) {
  const auto s = kaplan_meier({1, 2, 3}, {1, 0, 1}, {1, 1, 1}, grid_of({1, 2, 3}));
  EXPECT_NEAR(s.values[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(s.values[1], 2.0 / 3, 1e-15);
  EXPECT_NEAR(s.values[2], 0.0, 1e-15);
}

TEST(KaplanMeier, NoEventsMeansNoDrops) {
  const auto s = kaplan_meier({1, 5, 9}, {0, 0, 0}, {1, 1, 1}, grid_of({2, 8}));
  for (double v : s.values) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(KaplanMeier, WeightScaleInvariance) {
  const std::vector<double> t{1, 2, 2, 5, 7}, w1{1, 2, 1, 3, 1}, w2{2, 4, 2, 6, 2};
  const std::vector<uint8_t> e{1, 0, 1, 1, 0};
  const auto a = kaplan_meier(t, e, w1, grid_of({1, 2, 5, 7}));
  const auto b = kaplan_meier(t, e, w2, grid_of({1, 2, 5, 7}));
  for (size_t k = 0; k < a.values.size(); ++k) EXPECT_DOUBLE_EQ(a.values[k], b.values[k]);
}

TEST(KaplanMeier, ZeroTotalWeightRejected) {
  EXPECT_THROW(kaplan_meier({1, 2}, {1, 0}, {0, 0}, grid_of({1})), ParamError);
}

TEST(CensoringKm, HandCaseAndRoleSwap) {
  const auto g = censoring_km({1, 2}, {0, 1}, {1, 1}, grid_of({1, 2}));
  EXPECT_NEAR(g.values[0], 0.5, 1e-15);
  EXPECT_NEAR(g.values[1], 0.5, 1e-15);

  const auto all_events = censoring_km({1, 2, 3}, {1, 1, 1}, {1, 1, 1}, grid_of({1, 2, 3}));
  for (double v : all_events.values) EXPECT_DOUBLE_EQ(v, 1.0);

  // no ties: censoring_km(d) == kaplan_meier(1 - d)
  const std::vector<double> t{1, 3, 4, 6}, w{1, 1, 1, 1};
  const std::vector<uint8_t> d{1, 0, 1, 0}, flipped{0, 1, 0, 1};
  const auto a = censoring_km(t, d, w, grid_of({1, 3, 4, 6}));
  const auto b = kaplan_meier(t, flipped, w, grid_of({1, 3, 4, 6}));
  for (size_t k = 0; k < a.values.size(); ++k) EXPECT_DOUBLE_EQ(a.values[k], b.values[k]);
}

TEST(KaplanMeier, MatchesBruteForceProductLimitExactly) {
  Rng rng(2024);
  for (int rep = 0; rep < 1000; ++rep) {
    const size_t n = 2 + rng.below(19);
    std::vector<double> times(n), weights(n);
    std::vector<uint8_t> events(n);
    for (size_t i = 0; i < n; ++i) {
      times[i] = 1 + static_cast<double>(rng.below(12));  // heavy ties
      events[i] = rng.uniform() < 0.6 ? 1 : 0;
      weights[i] = rng.uniform() < 0.3 ? 2.0 : 1.0;
    }
    std::vector<double> grid{1, 3, 4.5, 7, 12};
    const auto mine = kaplan_meier(times, events, weights, grid_of(grid));
    const auto brute = oracle::product_limit(times, events, weights, grid);
    for (size_t k = 0; k < grid.size(); ++k)
      ASSERT_EQ(mine.values[k], brute[k]) << "rep " << rep << " grid point " << k;
  }
}

TEST(StepFunction, EvaluationConventions) {
  StepFunction f;
  f.grid = grid_of({1, 3});
  f.values = {0.8, 0.4};
  EXPECT_DOUBLE_EQ(f.at(0.5), 1.0);
  EXPECT_DOUBLE_EQ(f.at(1.0), 0.8);  // right continuous
  EXPECT_DOUBLE_EQ(f.at(2.9), 0.8);
  EXPECT_DOUBLE_EQ(f.at(3.0), 0.4);
  EXPECT_DOUBLE_EQ(f.before(1.0), 1.0);  // left limit
  EXPECT_DOUBLE_EQ(f.before(3.0), 0.8);
  EXPECT_DOUBLE_EQ(f.before(10.0), 0.4);
}

TEST(Rmst, HandCasesAndBounds) {
  StepFunction all_one;
  all_one.grid = grid_of({5});
  all_one.values = {1.0};
  EXPECT_DOUBLE_EQ(rmst(all_one, 5), 5.0);

  StepFunction f;
  f.grid = grid_of({1});
  f.values = {0.5};
  EXPECT_DOUBLE_EQ(rmst(f, 3), 1.0 + 0.5 * 2);

  EXPECT_THROW(rmst(f, 0), ParamError);
  EXPECT_THROW(rmst(f, -1), ParamError);

  // monotone in the curve, and always within [0, h]
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const size_t k = 1 + rng.below(8);
    StepFunction lo, hi;
    double t = 0;
    for (size_t j = 0; j < k; ++j) {
      t += rng.uniform() + 0.01;
      lo.grid.points.push_back(t);
      hi.grid.points.push_back(t);
    }
    double vl = 1, vh = 1;
    for (size_t j = 0; j < k; ++j) {
      vl = std::min(vl, rng.uniform());
      vh = std::min(1.0, vl + rng.uniform() * (1 - vl));
      lo.values.push_back(vl);
      hi.values.push_back(vh);
    }
    const double h = t + rng.uniform();
    const double a = rmst(lo, h), b = rmst(hi, h);
    EXPECT_LE(a, b + 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(b, h + 1e-12);
  }
}

TEST(TimeGrid, QuantilePointsCappedWithHorizonLast) {
  Rng rng(33);
  std::vector<double> times(500);
  std::vector<uint8_t> events(500, 1);
  for (auto& t : times) t = rng.uniform() * 900;
  const auto grid = make_time_grid(times, events, 720.0, 50);
  EXPECT_LE(grid.size(), 50u);
  EXPECT_DOUBLE_EQ(grid.back(), 720.0);
  for (size_t k = 1; k < grid.size(); ++k) EXPECT_LT(grid.points[k - 1], grid.points[k]);

  // few unique event times: grid is exactly those times plus the horizon
  const auto small =
      make_time_grid({3, 3, 9, 9, 11}, {1, 1, 1, 0, 1}, 20.0, 50);
  EXPECT_EQ(small.points, (std::vector<double>{3, 9, 11, 20}));
}

TEST(SurvivalForest, IndependentCovariateRecoversMarginalKm) {
  Rng rng(808);
  const size_t n = 2000;
  Matrix x(n, {"x0"});
  std::vector<double> times(n), ones(n, 1.0);
  std::vector<uint8_t> events(n, 1);
  for (size_t i = 0; i < n; ++i) {
    x.at(i, 0) = rng.uniform();
    times[i] = rng.exponential(0.1);
  }
  ForestParams prm;
  prm.num_trees = 100;
  prm.seed = 2;
  const auto forest = fit_survival_forest(x, times, events, prm);
  const auto marginal = kaplan_meier(times, events, ones, forest.grid);
  double sup = 0;
  for (size_t r = 0; r < 20; ++r) {
    const auto curve = predict_survival(forest, x, r * 50);
    for (size_t k = 0; k < curve.values.size(); ++k)
      sup = std::max(sup, std::fabs(curve.values[k] - marginal.values[k]));
  }
  EXPECT_LT(sup, 0.05);
}

TEST(SurvivalForest, BinaryCovariateSeparatesExponentialRates) {
  Rng rng(909);
  const size_t n = 4000;
  Matrix x(n, {"x0"});
  std::vector<double> times(n);
  std::vector<uint8_t> events(n, 1);
  for (size_t i = 0; i < n; ++i) {
    const double g = rng.uniform() < 0.5 ? 0.0 : 1.0;
    x.at(i, 0) = g;
    times[i] = rng.exponential(g == 0.0 ? 1.0 : 2.0);
  }
  ForestParams prm;
  prm.num_trees = 100;
  prm.seed = 6;
  const auto forest = fit_survival_forest(x, times, events, prm);
  auto median_of = [&](double xv) {
    Matrix q(1, {"x0"});
    q.at(0, 0) = xv;
    const auto curve = predict_survival(forest, q, 0);
    for (size_t k = 0; k < curve.values.size(); ++k)
      if (curve.values[k] <= 0.5) return curve.grid.points[k];
    return curve.grid.points.back();
  };
  const double ratio = median_of(0.0) / median_of(1.0);
  EXPECT_NEAR(ratio, 2.0, 0.3);  // rate 1 vs 2: medians ln2 vs ln2/2
}

TEST(SurvivalForest, DegenerateHazardYieldsNoSplit) {
  // every unit fails at the same time: within any candidate children the
  // log-rank numerator and variance are exactly zero, so trees stay
  // single-leaf no matter which subsample was drawn
  const size_t n = 60;
  Matrix x(n, {"x0"});
  std::vector<double> times(n, 3.0);
  std::vector<uint8_t> events(n, 1);
  for (size_t i = 0; i < n; ++i) x.at(i, 0) = static_cast<double>(i) / n;
  ForestParams prm;
  prm.num_trees = 30;
  prm.min_node_size = 2;
  prm.seed = 9;
  const auto forest = fit_survival_forest(x, times, events, prm);
  size_t splits = 0;
  for (const auto& tree : forest.trees)
    for (size_t k = 0; k < tree.num_nodes(); ++k) splits += tree.feature[k] >= 0;
  EXPECT_EQ(splits, 0u);
}

TEST(SurvivalForest, PredictionEqualsManualKernelKm) {
  Rng rng(1010);
  const size_t n = 300;
  Matrix x(n, {"x0", "x1"});
  std::vector<double> times(n);
  std::vector<uint8_t> events(n);
  for (size_t i = 0; i < n; ++i) {
    x.at(i, 0) = rng.uniform();
    x.at(i, 1) = rng.uniform();
    times[i] = rng.exponential(0.2 + x.at(i, 0));
    events[i] = rng.uniform() < 0.75 ? 1 : 0;
  }
  ForestParams prm;
  prm.num_trees = 40;
  prm.seed = 3;
  const auto forest = fit_survival_forest(x, times, events, prm);
  for (size_t r = 0; r < 10; ++r) {
    const auto curve = predict_survival(forest, x, r);
    const auto alpha = kernel_weights(forest, x, r);
    const auto manual = kaplan_meier(times, events, alpha, forest.grid);
    for (size_t k = 0; k < curve.values.size(); ++k)
      EXPECT_NEAR(curve.values[k], manual.values[k], 1e-12);
  }
}

TEST(SurvivalForest, CurvesAreMonotoneInUnitRange) {
  Rng rng(1111);
  const size_t n = 500;
  Matrix x(n, {"x0"});
  std::vector<double> times(n);
  std::vector<uint8_t> events(n);
  for (size_t i = 0; i < n; ++i) {
    x.at(i, 0) = rng.uniform();
    times[i] = rng.exponential(0.05);
    events[i] = rng.uniform() < 0.6 ? 1 : 0;
  }
  ForestParams prm;
  prm.num_trees = 50;
  prm.seed = 12;
  const auto forest = fit_survival_forest(x, times, events, prm);
  for (size_t r = 0; r < 100; ++r) {
    const auto curve = predict_survival(forest, x, r % n);
    double prev = 1.0;
    for (double v : curve.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, prev + 1e-15);
      prev = v;
    }
  }
}
