// Independent brute-force oracles used by both the unit and acceptance
// suites. These deliberately avoid the library's computation paths: the
// product-limit walks every grid point directly, the AUTOC is a literal
// prefix-mean sum, and the HC3 sandwich is explicit 2x2 matrix arithmetic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracle {

// Textbook weighted product-limit at each grid point: product over distinct
// observed event times s <= t of (1 - d(s) / r(s)) with r(s) = sum of weights
// with y >= s.
inline std::vector<double> product_limit(const std::vector<double>& times,
                                         const std::vector<uint8_t>& events,
                                         const std::vector<double>& weights,
                                         const std::vector<double>& grid) {
  std::vector<double> distinct;
  for (size_t i = 0; i < times.size(); ++i)
    if (events[i]) distinct.push_back(times[i]);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) {
    double surv = 1.0;
    for (double s : distinct) {
      if (s > t) break;
      double d = 0, r = 0;
      for (size_t i = 0; i < times.size(); ++i) {
        if (times[i] >= s) r += weights[i];
        if (times[i] == s && events[i]) d += weights[i];
      }
      if (r > 0) surv *= 1.0 - d / r;
    }
    out.push_back(surv);
  }
  return out;
}

// AUTOC as the literal average of prefix means minus the overall mean, with
// priorities sorted descending and ties broken by ascending index.
inline double autoc(const std::vector<double>& gamma, const std::vector<double>& priorities) {
  const size_t n = gamma.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (priorities[a] != priorities[b]) return priorities[a] > priorities[b];
    return a < b;
  });
  double overall = 0;
  for (double g : gamma) overall += g;
  overall /= static_cast<double>(n);
  double acc = 0;
  for (size_t k = 1; k <= n; ++k) {
    double prefix = 0;
    for (size_t j = 0; j < k; ++j) prefix += gamma[order[j]];
    acc += prefix / static_cast<double>(k) - overall;
  }
  return acc / static_cast<double>(n);
}

struct Hc3Fit {
  double beta0 = 0, beta1 = 0;
  double se0 = 0, se1 = 0;
};

// OLS of y on [1, x] with the HC3 sandwich, written out long-hand for a
// single regressor.
inline Hc3Fit hc3_one_regressor(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sxx = 0, sy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sxx += x[i] * x[i];
    sy += y[i];
    sxy += x[i] * y[i];
  }
  const double nn = static_cast<double>(n);
  // (A^T A)^{-1} for A = [1, x]
  const double det = nn * sxx - sx * sx;
  const double inv00 = sxx / det, inv01 = -sx / det, inv11 = nn / det;
  Hc3Fit fit;
  fit.beta1 = (nn * sxy - sx * sy) / det;
  fit.beta0 = (sy - fit.beta1 * sx) / nn;

  double meat00 = 0, meat01 = 0, meat11 = 0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.beta0 - fit.beta1 * x[i];
    const double lev = inv00 + 2 * inv01 * x[i] + inv11 * x[i] * x[i];
    const double s = r / (1.0 - lev);
    meat00 += s * s;
    meat01 += x[i] * s * s;
    meat11 += x[i] * x[i] * s * s;
  }
  // cov = inv * meat * inv
  const double c00 = inv00 * (inv00 * meat00 + inv01 * meat01) +
                     inv01 * (inv00 * meat01 + inv01 * meat11);
  const double c11 = inv01 * (inv01 * meat00 + inv11 * meat01) +
                     inv11 * (inv01 * meat01 + inv11 * meat11);
  fit.se0 = std::sqrt(c00);
  fit.se1 = std::sqrt(c11);
  return fit;
}

}  // namespace oracle
