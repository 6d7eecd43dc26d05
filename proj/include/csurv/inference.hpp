// Downstream inference on a fitted model: doubly robust scores, the ATE,
// best linear projections with HC3 covariance, and rank-weighted evaluation
// (TOC curve, AUTOC with half-sample bootstrap standard errors).
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/csf.hpp"
#include "csurv/dataset.hpp"

namespace csurv {

struct DrScores {
  std::vector<double> gamma;
};

struct BlpCoefficient {
  std::string name;
  double estimate = 0;
  double std_error = 0;
  double t_value = 0;
  double p_value = 0;
};

struct BlpResult {
  std::vector<BlpCoefficient> coefficients;
};

struct TocCurve {
  std::vector<double> q_grid;      // k/n, strictly increasing, ends at 1
  std::vector<double> toc_values;  // TOC(q); exactly 0 at q = 1
  double overall_ate = 0;
};

struct RateResult {
  double autoc_estimate = 0;
  double std_err = 0;
  size_t n_bootstrap = 0;
  TocCurve toc;
};

// Gamma_i = tau(X_i) + omega_i (W_i - e_i) / (e_i (1 - e_i)) *
//           (U_i - m_i - (W_i - e_i) tau(X_i));
// incomplete cases (omega = 0) contribute the tau term only.
inline DrScores dr_scores(const CsfModel& model) {
  const size_t n = model.size();
  DrScores out;
  out.gamma.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double e = model.nuisances.e_hat[i];
    if (!(e > 0 && e < 1)) throw ParamError("propensity outside (0, 1)");
    const double tau = model.tau_oob[i];
    double gamma = tau;
    if (model.ipcw[i] > 0) {
      const double wc = model.w[i] - e;
      const double resid = model.u_outcome[i] - model.nuisances.m_hat[i] - wc * tau;
      gamma += model.ipcw[i] * wc / (e * (1 - e)) * resid;
    }
    out.gamma[i] = gamma;
  }
  return out;
}

struct AteResult {
  double estimate = 0;
  double std_err = 0;
};

inline AteResult average_treatment_effect(const DrScores& scores) {
  const size_t n = scores.gamma.size();
  if (n < 2) throw ParamError("average_treatment_effect needs n >= 2");
  AteResult res;
  res.estimate = mean_of(scores.gamma);
  res.std_err = sample_sd(scores.gamma) / std::sqrt(static_cast<double>(n));
  return res;
}

// OLS of Gamma on [1, a] with the HC3 sandwich. Throws on rank deficiency,
// naming the offending columns.
inline BlpResult best_linear_projection(const DrScores& scores, const Matrix& a) {
  const auto n = static_cast<Eigen::Index>(scores.gamma.size());
  if (a.rows() != scores.gamma.size()) throw ParamError("projection covariates must have n rows");
  const auto p = static_cast<Eigen::Index>(a.cols()) + 1;
  if (n <= p) throw ParamError("best_linear_projection needs n > number of coefficients");

  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      design(i, j) = a.at(static_cast<size_t>(i), static_cast<size_t>(j - 1));

  // rank check with column attribution
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      std::string bad;
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> probe(design.col(0));
      Eigen::MatrixXd sofar = design.col(0);
      for (Eigen::Index j = 1; j < p; ++j) {
        Eigen::MatrixXd trial(n, sofar.cols() + 1);
        trial << sofar, design.col(j);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> q2(trial);
        q2.setThreshold(1e-10);
        if (q2.rank() < trial.cols()) {
          if (!bad.empty()) bad += ", ";
          bad += a.names()[static_cast<size_t>(j - 1)];
        } else {
          sofar = std::move(trial);
        }
      }
      throw LinAlgError("projection design is rank deficient; dependent columns: " +
                        (bad.empty() ? std::string("(intercept)") : bad));
    }
  }

  Eigen::VectorXd gamma(n);
  for (Eigen::Index i = 0; i < n; ++i) gamma(i) = scores.gamma[static_cast<size_t>(i)];

  const Eigen::MatrixXd xtx = design.transpose() * design;
  const Eigen::MatrixXd xtx_inv = xtx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::VectorXd beta = xtx_inv * (design.transpose() * gamma);
  const Eigen::VectorXd resid = gamma - design * beta;

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd row = design.row(i).transpose();
    const double leverage = (row.transpose() * xtx_inv * row)(0, 0);
    const double denom = 1.0 - leverage;
    if (!(denom > 1e-12))
      throw LinAlgError("HC3 undefined: leverage of 1 at row " + std::to_string(i + 1));
    const double scaled = resid(i) / denom;
    meat.noalias() += row * row.transpose() * (scaled * scaled);
  }
  const Eigen::MatrixXd cov = xtx_inv * meat * xtx_inv;

  BlpResult out;
  out.coefficients.resize(static_cast<size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    auto& c = out.coefficients[static_cast<size_t>(j)];
    c.name = j == 0 ? "(Intercept)" : a.names()[static_cast<size_t>(j - 1)];
    c.estimate = beta(j);
    c.std_error = std::sqrt(std::max(cov(j, j), 0.0));
    c.t_value = c.std_error > 0 ? c.estimate / c.std_error : 0.0;
    c.p_value = normal_two_sided_p(c.t_value);
  }
  return out;
}

namespace detail {

// Indices sorted by priority descending, ties by ascending unit id.
inline std::vector<uint32_t> priority_order(const std::vector<double>& priorities) {
  std::vector<uint32_t> order(priorities.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](uint32_t l, uint32_t r) {
    if (priorities[l] != priorities[r]) return priorities[l] > priorities[r];
    return l < r;
  });
  return order;
}

// AUTOC = mean over k of TOC(k/n), computed from one running prefix sum so
// that TOC(1) is exactly zero.
inline double autoc_from_sorted(const std::vector<double>& gamma,
                                const std::vector<uint32_t>& order) {
  const size_t n = order.size();
  double prefix = 0;
  std::vector<double> prefix_means(n);
  for (size_t k = 0; k < n; ++k) {
    prefix += gamma[order[k]];
    prefix_means[k] = prefix / static_cast<double>(k + 1);
  }
  const double overall = prefix_means[n - 1];
  double acc = 0;
  for (size_t k = 0; k < n; ++k) acc += prefix_means[k] - overall;
  return acc / static_cast<double>(n);
}

}  // namespace detail

inline TocCurve toc_curve(const DrScores& scores, const std::vector<double>& priorities) {
  const size_t n = scores.gamma.size();
  if (priorities.size() != n) throw ParamError("priorities must have length n");
  if (n < 2) throw ParamError("toc_curve needs n >= 2");
  const auto order = detail::priority_order(priorities);
  TocCurve out;
  out.q_grid.resize(n);
  out.toc_values.resize(n);
  double prefix = 0;
  for (size_t k = 0; k < n; ++k) {
    prefix += scores.gamma[order[k]];
    out.q_grid[k] = static_cast<double>(k + 1) / static_cast<double>(n);
    out.toc_values[k] = prefix / static_cast<double>(k + 1);
  }
  out.overall_ate = out.toc_values[n - 1];
  for (auto& v : out.toc_values) v -= out.overall_ate;  // TOC(1) == 0 exactly
  return out;
}

// AUTOC with a half-sample bootstrap standard error: B draws of floor(n/2)
// without replacement, sd of replicates divided by sqrt(2).
inline RateResult rate(const DrScores& scores, const std::vector<double>& priorities,
                       size_t n_bootstrap = 200, uint64_t seed = 42,
                       unsigned num_threads = 0) {
  const size_t n = scores.gamma.size();
  if (n < 4) throw ParamError("rate needs n >= 4");
  if (n_bootstrap < 2) throw ParamError("rate needs at least 2 bootstrap replicates");
  if (priorities.size() != n) throw ParamError("priorities must have length n");

  RateResult out;
  out.toc = toc_curve(scores, priorities);
  out.autoc_estimate = mean_of(out.toc.toc_values);
  out.n_bootstrap = n_bootstrap;

  const size_t half = n / 2;
  std::vector<double> replicates(n_bootstrap, 0.0);
  parallel_for(n_bootstrap, num_threads, [&](size_t b, unsigned) {
    Rng rng = Rng::stream(seed, b);
    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.partial_shuffle(ids, half);
    ids.resize(half);
    std::sort(ids.begin(), ids.end());  // ascending unit id for tie breaking
    std::vector<double> g(half), s(half);
    for (size_t k = 0; k < half; ++k) {
      g[k] = scores.gamma[ids[k]];
      s[k] = priorities[ids[k]];
    }
    replicates[b] = detail::autoc_from_sorted(g, detail::priority_order(s));
  });
  out.std_err = sample_sd(replicates) / std::sqrt(2.0);
  return out;
}

// Thinned copy for plot/file output (keeps the final point q = 1).
inline TocCurve thin_toc(const TocCurve& toc, size_t max_points = 200) {
  const size_t n = toc.q_grid.size();
  if (max_points < 2 || n <= max_points) return toc;
  TocCurve out;
  out.overall_ate = toc.overall_ate;
  out.q_grid.reserve(max_points);
  out.toc_values.reserve(max_points);
  size_t prev = n;  // sentinel
  for (size_t j = 1; j <= max_points; ++j) {
    size_t k = static_cast<size_t>(std::llround(
                   static_cast<double>(j) * static_cast<double>(n) /
                   static_cast<double>(max_points))) -
               1;
    k = std::min(k, n - 1);
    if (k == prev) continue;
    prev = k;
    out.q_grid.push_back(toc.q_grid[k]);
    out.toc_values.push_back(toc.toc_values[k]);
  }
  if (out.q_grid.empty() || out.q_grid.back() != 1.0) {
    out.q_grid.push_back(1.0);
    out.toc_values.push_back(toc.toc_values.back());
  }
  return out;
}

// Pointwise half-sample bootstrap standard errors of TOC(q) at the given
// fractions; same replicate scheme (and seed convention) as rate().
inline std::vector<double> toc_std_errors(const DrScores& scores,
                                          const std::vector<double>& priorities,
                                          const std::vector<double>& q_points,
                                          size_t n_bootstrap = 200, uint64_t seed = 42,
                                          unsigned num_threads = 0) {
  const size_t n = scores.gamma.size();
  if (n < 4) throw ParamError("toc_std_errors needs n >= 4");
  if (n_bootstrap < 2) throw ParamError("toc_std_errors needs at least 2 replicates");
  const size_t half = n / 2;
  std::vector<std::vector<double>> reps(n_bootstrap);
  parallel_for(n_bootstrap, num_threads, [&](size_t b, unsigned) {
    Rng rng = Rng::stream(seed, b);
    std::vector<uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.partial_shuffle(ids, half);
    ids.resize(half);
    std::sort(ids.begin(), ids.end());
    std::vector<double> g(half), s(half);
    for (size_t k = 0; k < half; ++k) {
      g[k] = scores.gamma[ids[k]];
      s[k] = priorities[ids[k]];
    }
    const auto order = detail::priority_order(s);
    std::vector<double> prefix_means(half);
    double prefix = 0;
    for (size_t k = 0; k < half; ++k) {
      prefix += g[order[k]];
      prefix_means[k] = prefix / static_cast<double>(k + 1);
    }
    const double overall = prefix_means[half - 1];
    auto& rep = reps[b];
    rep.resize(q_points.size());
    for (size_t j = 0; j < q_points.size(); ++j) {
      auto k = static_cast<size_t>(
          std::ceil(q_points[j] * static_cast<double>(half)));
      k = std::min(std::max<size_t>(k, 1), half);
      rep[j] = prefix_means[k - 1] - overall;
    }
  });
  std::vector<double> out(q_points.size(), 0.0);
  std::vector<double> column(n_bootstrap);
  for (size_t j = 0; j < q_points.size(); ++j) {
    for (size_t b = 0; b < n_bootstrap; ++b) column[b] = reps[b][j];
    out[j] = sample_sd(column) / std::sqrt(2.0);
  }
  return out;
}

}  // namespace csurv
