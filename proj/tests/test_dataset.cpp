#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "csurv/dataset.hpp"

using namespace csurv;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = std::string(::testing::TempDir()) + name;
  std::ofstream out(path);
  out << content;
  return path;
}

SurvivalDataset toy(std::vector<double> y, std::vector<double> w, std::vector<double> d) {
  SurvivalDataset ds;
  ds.y = std::move(y);
  ds.w = std::move(w);
  ds.d = std::move(d);
  ds.x = Matrix(ds.y.size(), {"x0"});
  for (size_t i = 0; i < ds.y.size(); ++i) ds.x.at(i, 0) = static_cast<double>(i);
  return ds;
}

}  // namespace

TEST(LoadCsv, JtpaShapeMatchesPaper) {
  const auto ds = load_csv(std::string(CSURV_DATA_DIR) + "/jtpa.csv", ColumnSchema::jtpa());
  EXPECT_NEAR(static_cast<double>(ds.n()), 11000.0, 300.0);
  EXPECT_EQ(ds.p(), 6u);
  EXPECT_EQ(ds.x.names()[0], "age");
}

TEST(LoadCsv, MinimalTwoRowFile) {
  const auto path = write_temp("mini.csv", "y,w,d,x\n1,0,1,0\n2,1,0,1\n");
  const auto ds = load_csv(path, ColumnSchema{"y", "w", "d", {"x"}});
  EXPECT_EQ(ds.n(), 2u);
  EXPECT_EQ(ds.p(), 1u);
  EXPECT_DOUBLE_EQ(ds.y[1], 2.0);
}

TEST(LoadCsv, MissingEventColumnIsSchemaError) {
  const auto path = write_temp("noev.csv", "days,treatment,x\n1,0,0\n2,1,1\n");
  try {
    load_csv(path, ColumnSchema{"days", "treatment", "delta", {"x"}});
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("event column not found"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos);
  }
}

TEST(LoadCsv, NonNumericCellNamesRowAndColumn) {
  const auto path = write_temp("bad.csv", "y,w,d,x\n1,0,1,0\n2,oops,0,1\n");
  try {
    load_csv(path, ColumnSchema{"y", "w", "d", {"x"}});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos);
    EXPECT_NE(msg.find("'w'"), std::string::npos);
  }
}

TEST(LoadCsv, EmptyFileIsIoError) {
  const auto path = write_temp("empty.csv", "");
  EXPECT_THROW(load_csv(path, ColumnSchema{"y", "w", "d", {"x"}}), IoError);
}

TEST(LoadCsv, DeterministicAcrossReloads) {
  const auto path = std::string(CSURV_DATA_DIR) + "/jtpa.csv";
  const auto a = load_csv(path, ColumnSchema::jtpa());
  const auto b = load_csv(path, ColumnSchema::jtpa());
  EXPECT_EQ(dataset_fingerprint(a), dataset_fingerprint(b));
  EXPECT_EQ(a.y, b.y);
}

TEST(Validate, RejectsNonBinaryTreatment) {
  auto ds = toy({1, 2}, {0, 2}, {1, 0});
  EXPECT_THROW(validate(ds), ParamError);
}

TEST(Validate, NoCensoringNeedsFlag) {
  auto ds = toy({1, 2}, {0, 1}, {1, 1});
  EXPECT_THROW(validate(ds), ParamError);
  EXPECT_NO_THROW(validate(ds, true));
}

TEST(Relabel, FlipsAndIsInvolution) {
  auto ds = toy({1, 2, 3}, {0, 1, 1}, {1, 0, 1});
  const auto once = relabel_treatment(ds);
  EXPECT_EQ(once.w, (std::vector<double>{1, 0, 0}));
  const auto twice = relabel_treatment(once);
  EXPECT_EQ(twice.w, ds.w);
  double before = (0 + 1 + 1) / 3.0, after = (1 + 0 + 0) / 3.0;
  EXPECT_DOUBLE_EQ(before + after, 1.0);
}

TEST(Truncate, HorizonCases) {
  auto ds = toy({800, 300, 300, 720}, {0, 1, 0, 1}, {0, 0, 1, 0});
  const auto t = truncate(ds, 720);
  EXPECT_DOUBLE_EQ(t.u[0], 720);
  EXPECT_EQ(t.dh[0], 1);  // censored after the horizon is complete
  EXPECT_DOUBLE_EQ(t.u[1], 300);
  EXPECT_EQ(t.dh[1], 0);
  EXPECT_EQ(t.dh[2], 1);
  EXPECT_EQ(t.dh[3], 1);  // censored exactly at the horizon counts as complete
}

TEST(Truncate, BadHorizonRejected) {
  auto ds = toy({1, 2}, {0, 1}, {1, 0});
  EXPECT_THROW(truncate(ds, 0), ParamError);
  EXPECT_THROW(truncate(ds, -3), ParamError);
}

TEST(Truncate, IdempotentAndCompletenessRule) {
  Rng rng(99);
  const size_t n = 400;
  SurvivalDataset ds;
  ds.x = Matrix(n, {"x0"});
  for (size_t i = 0; i < n; ++i) {
    ds.y.push_back(rng.uniform() * 1000);
    ds.w.push_back(rng.uniform() < 0.5 ? 1.0 : 0.0);
    ds.d.push_back(rng.uniform() < 0.7 ? 1.0 : 0.0);
  }
  const double h = 600;
  const auto t = truncate(ds, h);
  SurvivalDataset again = ds;
  again.y = t.u;
  std::vector<double> d2(n);
  for (size_t i = 0; i < n; ++i) d2[i] = t.dh[i];
  again.d = d2;
  const auto t2 = truncate(again, h);
  EXPECT_EQ(t2.u, t.u);
  EXPECT_EQ(t2.dh, t.dh);
  for (size_t i = 0; i < n; ++i)
    if (!t.dh[i]) {
      EXPECT_EQ(ds.d[i], 0.0);
      EXPECT_LT(ds.y[i], h);
    }
}

TEST(Histogram, HandCountAndPartition) {
  auto ds = toy({1, 2, 3, 4}, {0, 1, 0, 1}, {1, 1, 0, 0});
  const auto spec = histogram(ds, 2);
  EXPECT_EQ(spec.counts_event, (std::vector<size_t>{2, 0}));
  EXPECT_EQ(spec.counts_censored, (std::vector<size_t>{0, 2}));

  const auto one = histogram(ds, 1);
  EXPECT_EQ(one.counts_event[0] + one.counts_censored[0], ds.n());

  auto all_events = toy({5, 6, 7}, {0, 1, 1}, {1, 1, 1});
  const auto he = histogram(all_events, 3);
  for (auto c : he.counts_censored) EXPECT_EQ(c, 0u);

  Rng rng(3);
  for (size_t n_bins : {1, 2, 7, 31}) {
    auto big = toy({}, {}, {});
    big.x = Matrix(0, {"x0"});
    SurvivalDataset r;
    r.x = Matrix(50, {"x0"});
    for (size_t i = 0; i < 50; ++i) {
      r.y.push_back(rng.uniform() * 10);
      r.w.push_back(i % 2 ? 1.0 : 0.0);
      r.d.push_back(rng.uniform() < 0.5 ? 1.0 : 0.0);
    }
    const auto hs = histogram(r, n_bins);
    size_t total = 0;
    for (size_t b = 0; b < n_bins; ++b) total += hs.counts_event[b] + hs.counts_censored[b];
    EXPECT_EQ(total, r.n());
  }
}

TEST(GroupMeans, JtpaFullSampleMatchesPaperTable) {
  const auto ds = load_csv(std::string(CSURV_DATA_DIR) + "/jtpa.csv", ColumnSchema::jtpa());
  std::vector<uint8_t> all(ds.n(), 1);
  const auto means = group_covariate_means(ds, all);
  // paper's full.sample row: age 29, hsged .48, white .56, children .49,
  // married .23, male .43
  EXPECT_NEAR(means[0].second, 29, 1.0);
  EXPECT_NEAR(means[1].second, 0.48, 0.02);
  EXPECT_NEAR(means[2].second, 0.56, 0.02);
  EXPECT_NEAR(means[3].second, 0.49, 0.02);
  EXPECT_NEAR(means[4].second, 0.23, 0.02);
  EXPECT_NEAR(means[5].second, 0.43, 0.02);
}

TEST(GroupMeans, SingleRowAndEmptySelection) {
  auto ds = toy({1, 2, 3}, {0, 1, 1}, {1, 0, 1});
  std::vector<uint8_t> one(3, 0);
  one[1] = 1;
  const auto means = group_covariate_means(ds, one);
  EXPECT_DOUBLE_EQ(means[0].second, ds.x.at(1, 0));
  std::vector<uint8_t> none(3, 0);
  EXPECT_THROW(group_covariate_means(ds, none), SelectionError);
}
