// Honest, subsampled, axis-aligned forests. One grower drives three split
// criteria (weighted variance reduction, grid log-rank, orthogonal gradient
// pseudo-outcomes); trees are grown on a split half and populated with a
// disjoint estimation half. Determinism contract: per-tree RNG streams are
// derived from (seed, tree index), so identical inputs give bitwise-identical
// forests at any thread count.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/dataset.hpp"
#include "csurv/stepfunction.hpp"

namespace csurv {

struct ForestParams {
  size_t num_trees = 2000;
  double subsample_fraction = 0.5;
  double honesty_fraction = 0.5;
  size_t mtry = 0;  // 0 = auto: min(p, ceil(sqrt(p) + 20))
  size_t min_node_size = 5;
  double alpha = 0.05;  // balance floor: each child keeps >= alpha of the
                        // parent's criterion mass (and of treatment variation
                        // for causal splits)
  uint64_t seed = 42;
};

inline size_t resolve_mtry(const ForestParams& prm, size_t p) {
  if (prm.mtry > 0) return std::min(prm.mtry, p);
  const auto def = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(p)) + 20.0));
  return std::min(def, p);
}

inline void validate(const ForestParams& prm, size_t p) {
  if (prm.num_trees < 2) throw ParamError("num_trees must be at least 2");
  if (!(prm.subsample_fraction > 0 && prm.subsample_fraction <= 1))
    throw ParamError("subsample_fraction must lie in (0, 1]");
  if (!(prm.honesty_fraction > 0 && prm.honesty_fraction < 1))
    throw ParamError("honesty_fraction must lie in (0, 1)");
  if (prm.min_node_size < 1) throw ParamError("min_node_size must be positive");
  if (!(prm.alpha >= 0 && prm.alpha < 0.5)) throw ParamError("alpha must lie in [0, 0.5)");
  if (prm.mtry > p) throw ParamError("mtry exceeds the number of features");
}

enum class LabelKind : uint8_t { regression = 0, survival = 1, causal = 2 };

struct Tree {
  // Flat preorder node arrays; feature == -1 marks a leaf.
  std::vector<int32_t> feature;
  std::vector<double> threshold;
  std::vector<int32_t> left;
  std::vector<int32_t> right;
  std::vector<int32_t> mem_begin;  // leaf member range into `members`
  std::vector<int32_t> mem_end;
  std::vector<double> leaf_a;  // criterion-specific leaf sums, see fit_* docs
  std::vector<double> leaf_b;
  std::vector<uint32_t> members;  // estimation-half ids, ascending per leaf
  std::vector<uint64_t> inbag;    // bitset over training ids (both halves)
  std::vector<uint32_t> split_ids;  // split half, ascending (= inbag minus members)

  size_t num_nodes() const { return feature.size(); }
  bool is_inbag(uint32_t id) const { return (inbag[id >> 6] >> (id & 63)) & 1ULL; }

  int32_t leaf_for(const Matrix& m, size_t row) const {
    int32_t node = 0;
    while (feature[static_cast<size_t>(node)] >= 0) {
      const auto f = static_cast<size_t>(feature[static_cast<size_t>(node)]);
      node = m.at(row, f) <= threshold[static_cast<size_t>(node)]
                 ? left[static_cast<size_t>(node)]
                 : right[static_cast<size_t>(node)];
    }
    return node;
  }
};

struct Forest {
  LabelKind kind = LabelKind::regression;
  ForestParams params;
  uint32_t n_train = 0;
  uint32_t p = 0;
  size_t subsample_size = 0;   // per-tree |split half| + |estimation half|
  size_t split_half_size = 0;
  std::vector<Tree> trees;
  // Per-unit weights the leaf estimates and kernel use (the training
  // sample_weights for regression forests, all-ones otherwise).
  std::vector<double> sample_weights;
  std::vector<double> labels;  // regression labels (empty for other kinds)
  // Survival payload.
  TimeGrid grid;
  std::vector<double> surv_time;
  std::vector<uint8_t> surv_event;
  // Causal payload: residuals and IPCW weights aligned to training ids.
  std::vector<double> cz_wres;   // W tilde
  std::vector<double> cz_ures;   // U tilde
  std::vector<double> cz_omega;  // IPCW weights (0 = excluded from training)
};

// ---------------------------------------------------------------------------
// Split criteria.
// ---------------------------------------------------------------------------
namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Maximizes sum over children of (sum_c w*y)^2 / (sum_c w), i.e. weighted
// variance reduction, reported relative to the parent so that a constant
// label gives exactly zero gain.
class WeightedMeanSplitter {
 public:
  WeightedMeanSplitter(const double* labels, const double* weights, double alpha = 0.05)
      : y_(labels), w_(weights), alpha_(alpha) {}

  bool node_init(const uint32_t* ids, size_t m) {
    wp_ = 0;
    sp_ = 0;
    for (size_t i = 0; i < m; ++i) {
      wp_ += w_[ids[i]];
      sp_ += w_[ids[i]] * y_[ids[i]];
    }
    if (!(wp_ > 0)) return false;
    parent_term_ = sp_ * sp_ / wp_;
    min_child_weight_ = alpha_ * wp_;
    return true;
  }

  // Candidate gains below this are noise, not structure.
  double min_gain() const { return 1e-10 * parent_term_; }

  void feature_reset() {
    wl_ = 0;
    sl_ = 0;
  }

  void push_left(uint32_t id) {
    wl_ += w_[id];
    sl_ += w_[id] * y_[id];
  }

  double gain() const {
    const double wr = wp_ - wl_;
    if (!(wl_ > 0) || !(wr > 0)) return kNegInf;
    if (wl_ < min_child_weight_ || wr < min_child_weight_) return kNegInf;
    const double sr = sp_ - sl_;
    return sl_ * sl_ / wl_ + sr * sr / wr - parent_term_;
  }

  void leaf_stats(const uint32_t* ids, size_t m, double& a, double& b) const {
    a = 0;
    b = 0;
    for (size_t i = 0; i < m; ++i) {
      a += w_[ids[i]] * y_[ids[i]];
      b += w_[ids[i]];
    }
  }

 private:
  const double* y_;
  const double* w_;
  double alpha_;
  double wp_ = 0, sp_ = 0, parent_term_ = 0, min_child_weight_ = 0;
  double wl_ = 0, sl_ = 0;
};

// Orthogonal gradient splitting: per node, pseudo-outcomes
//   rho_i = W~_i (U~_i - W~_i tau_parent) / (sum w W~^2 / sum w)
// are formed from the split half and fed to the weighted-mean criterion with
// the IPCW weights. A node with no W~ variation becomes a leaf.
class CausalSplitter {
 public:
  CausalSplitter(const double* wres, const double* ures, const double* omega, size_t n,
                 double alpha = 0.05)
      : wres_(wres),
        ures_(ures),
        om_(omega),
        alpha_(alpha),
        rho_(n, 0.0),
        core_(rho_.data(), omega, alpha) {}

  bool node_init(const uint32_t* ids, size_t m) {
    double sw = 0, sww = 0, swu = 0, swr = 0;
    for (size_t i = 0; i < m; ++i) {
      const uint32_t id = ids[i];
      const double o = om_[id], wt = wres_[id];
      sw += o;
      sww += o * wt * wt;
      swu += o * wt * ures_[id];
      swr += o * wt;
    }
    if (!(sw > 0) || !(sww > 0)) return false;
    const double wvar = sww - swr * swr / sw;
    if (!(wvar > 1e-10 * sww)) return false;  // zero treatment-residual variance
    const double tau_parent = swu / sww;
    const double vbar = sww / sw;
    for (size_t i = 0; i < m; ++i) {
      const uint32_t id = ids[i];
      rho_[id] = wres_[id] * (ures_[id] - wres_[id] * tau_parent) / vbar;
    }
    sww_parent_ = sww;
    min_child_variation_ = alpha_ * sww;
    return core_.node_init(ids, m);
  }

  double min_gain() const { return 1e-10; }

  void feature_reset() {
    core_.feature_reset();
    sww_left_ = 0;
  }

  void push_left(uint32_t id) {
    core_.push_left(id);
    sww_left_ += om_[id] * wres_[id] * wres_[id];
  }

  // Stabilized splits: both children must retain a share of the parent's
  // treatment variation, else leaf ratios are unidentified slivers.
  double gain() const {
    if (sww_left_ < min_child_variation_ ||
        sww_parent_ - sww_left_ < min_child_variation_)
      return kNegInf;
    return core_.gain();
  }

  // Leaf sums for the kernel CATE estimator: a = sum w W~ U~, b = sum w W~^2.
  void leaf_stats(const uint32_t* ids, size_t m, double& a, double& b) const {
    a = 0;
    b = 0;
    for (size_t i = 0; i < m; ++i) {
      const uint32_t id = ids[i];
      a += om_[id] * wres_[id] * ures_[id];
      b += om_[id] * wres_[id] * wres_[id];
    }
  }

 private:
  const double* wres_;
  const double* ures_;
  const double* om_;
  double alpha_;
  std::vector<double> rho_;
  WeightedMeanSplitter core_;
  double sww_parent_ = 0, sww_left_ = 0, min_child_variation_ = 0;
};

// Standardized two-sample log-rank statistic on the discretized grid.
// Candidates need at least one event on each side.
class SurvivalSplitter {
 public:
  SurvivalSplitter(const uint32_t* bin, const uint8_t* event, const double* weights,
                   size_t num_bins, double alpha = 0.05)
      : bin_(bin), ev_(event), w_(weights), k_(num_bins), alpha_(alpha) {
    d_par_.resize(k_ + 1);
    mass_par_.resize(k_ + 1);
    d_left_.resize(k_ + 1);
    mass_left_.resize(k_ + 1);
  }

  bool node_init(const uint32_t* ids, size_t m) {
    std::fill(d_par_.begin(), d_par_.end(), 0.0);
    std::fill(mass_par_.begin(), mass_par_.end(), 0.0);
    events_par_ = 0;
    mass_total_ = 0;
    for (size_t i = 0; i < m; ++i) {
      const uint32_t id = ids[i];
      const double wi = w_[id];
      mass_par_[bin_[id]] += wi;
      mass_total_ += wi;
      if (ev_[id] && bin_[id] < k_) {
        d_par_[bin_[id]] += wi;
        events_par_ += wi;
      }
    }
    min_child_mass_ = alpha_ * mass_total_;
    return events_par_ > 0;
  }

  double min_gain() const { return 1e-12; }

  void feature_reset() {
    std::fill(d_left_.begin(), d_left_.end(), 0.0);
    std::fill(mass_left_.begin(), mass_left_.end(), 0.0);
    events_left_ = 0;
    mass_left_total_ = 0;
  }

  void push_left(uint32_t id) {
    const double wi = w_[id];
    mass_left_[bin_[id]] += wi;
    mass_left_total_ += wi;
    if (ev_[id] && bin_[id] < k_) {
      d_left_[bin_[id]] += wi;
      events_left_ += wi;
    }
  }

  double gain() const {
    if (!(events_left_ > 0) || !(events_par_ - events_left_ > 0)) return kNegInf;
    if (mass_left_total_ < min_child_mass_ ||
        mass_total_ - mass_left_total_ < min_child_mass_)
      return kNegInf;
    double num = 0, var = 0, rl = 0, rp = 0;
    for (size_t k = k_ + 1; k-- > 0;) {
      rl += mass_left_[k];
      rp += mass_par_[k];
      if (k < k_ && d_par_[k] > 0 && rp > 0) {
        const double frac = rl / rp;
        num += d_left_[k] - frac * d_par_[k];
        if (rp > 1)
          var += d_par_[k] * frac * (1 - frac) * (rp - d_par_[k]) / (rp - 1);
      }
    }
    if (!(var > 0)) return kNegInf;
    return std::fabs(num) / std::sqrt(var);
  }

  void leaf_stats(const uint32_t*, size_t, double& a, double& b) const {
    a = 0;
    b = 0;
  }

 private:
  const uint32_t* bin_;
  const uint8_t* ev_;
  const double* w_;
  size_t k_;
  double alpha_;
  std::vector<double> d_par_, mass_par_, d_left_, mass_left_;
  double events_par_ = 0, events_left_ = 0;
  double mass_total_ = 0, mass_left_total_ = 0, min_child_mass_ = 0;
};

// ---------------------------------------------------------------------------
// Grower.
// ---------------------------------------------------------------------------
struct GrowWorkspace {
  std::vector<uint32_t> pool;
  std::vector<uint32_t> split_ids, est_ids;
  std::vector<std::pair<double, uint32_t>> sv;   // split (value, id)
  std::vector<std::pair<double, double>> evw;    // est (value, weight)
  std::vector<uint32_t> feat;
};

template <class Splitter>
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const ForestParams& prm, size_t mtry,
              const std::vector<double>& est_weights, Splitter& splitter,
              GrowWorkspace& ws, Rng& rng, Tree& tree)
      : x_(x),
        prm_(prm),
        mtry_(mtry),
        est_w_(est_weights),
        sp_(splitter),
        ws_(ws),
        rng_(rng),
        tree_(tree) {}

  int32_t build(uint32_t* sb, uint32_t* se, uint32_t* eb, uint32_t* ee) {
    const size_t m_split = static_cast<size_t>(se - sb);
    const size_t m_est = static_cast<size_t>(ee - eb);
    if (m_split < 2 * prm_.min_node_size || m_est < 2 * prm_.min_node_size)
      return make_leaf(eb, ee);
    if (!sp_.node_init(sb, m_split)) return make_leaf(eb, ee);

    double best_gain = sp_.min_gain();
    int32_t best_feature = -1;
    double best_threshold = 0;

    // The candidate count is Poisson(mtry) per node, as in the reference
    // software family; this keeps trees decorrelated when mtry covers all
    // features.
    size_t n_candidates =
        std::max<size_t>(1, std::min(rng_.poisson(static_cast<double>(mtry_)), x_.cols()));
    ws_.feat.resize(x_.cols());
    std::iota(ws_.feat.begin(), ws_.feat.end(), 0u);
    rng_.partial_shuffle(ws_.feat, n_candidates);
    std::sort(ws_.feat.begin(), ws_.feat.begin() + static_cast<long>(n_candidates));

    double est_w_total = 0;
    for (uint32_t* it = eb; it != ee; ++it) est_w_total += est_w_[*it];

    for (size_t c = 0; c < n_candidates; ++c) {
      const size_t f = ws_.feat[c];
      const auto& col = x_.col(f);

      ws_.sv.resize(m_split);
      for (size_t i = 0; i < m_split; ++i) ws_.sv[i] = {col[sb[i]], sb[i]};
      std::sort(ws_.sv.begin(), ws_.sv.end());
      if (ws_.sv.front().first == ws_.sv.back().first) continue;  // constant feature

      ws_.evw.resize(m_est);
      for (size_t i = 0; i < m_est; ++i) ws_.evw[i] = {col[eb[i]], est_w_[eb[i]]};
      std::sort(ws_.evw.begin(), ws_.evw.end());

      sp_.feature_reset();
      size_t ep = 0;
      double est_w_left = 0;
      size_t i = 0;
      while (i < m_split) {
        const double v = ws_.sv[i].first;
        size_t j = i;
        for (; j < m_split && ws_.sv[j].first == v; ++j) sp_.push_left(ws_.sv[j].second);
        if (j == m_split) break;
        const double vnext = ws_.sv[j].first;
        double thr = v + (vnext - v) / 2;
        if (!(thr >= v && thr < vnext)) thr = v;  // adjacent representable values
        while (ep < m_est && ws_.evw[ep].first <= thr) est_w_left += ws_.evw[ep++].second;
        const size_t nl = ep, nr = m_est - ep;
        const size_t sl = j, sr = m_split - j;
        if (nl >= prm_.min_node_size && nr >= prm_.min_node_size &&
            sl >= prm_.min_node_size && sr >= prm_.min_node_size && est_w_left > 0 &&
            est_w_total - est_w_left > 0) {
          const double g = sp_.gain();
          if (g > best_gain) {
            best_gain = g;
            best_feature = static_cast<int32_t>(f);
            best_threshold = thr;
          }
        }
        i = j;
      }
    }

    if (best_feature < 0) return make_leaf(eb, ee);

    const auto& col = x_.col(static_cast<size_t>(best_feature));
    const double thr = best_threshold;
    uint32_t* smid =
        std::partition(sb, se, [&](uint32_t id) { return col[id] <= thr; });
    uint32_t* emid =
        std::partition(eb, ee, [&](uint32_t id) { return col[id] <= thr; });

    const int32_t node = new_node();
    tree_.feature[static_cast<size_t>(node)] = best_feature;
    tree_.threshold[static_cast<size_t>(node)] = thr;
    const int32_t l = build(sb, smid, eb, emid);
    const int32_t r = build(smid, se, emid, ee);
    tree_.left[static_cast<size_t>(node)] = l;
    tree_.right[static_cast<size_t>(node)] = r;
    return node;
  }

 private:
  int32_t new_node() {
    const auto id = static_cast<int32_t>(tree_.num_nodes());
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.mem_begin.push_back(0);
    tree_.mem_end.push_back(0);
    tree_.leaf_a.push_back(0);
    tree_.leaf_b.push_back(0);
    return id;
  }

  int32_t make_leaf(uint32_t* eb, uint32_t* ee) {
    const int32_t node = new_node();
    std::sort(eb, ee);
    const auto begin = static_cast<int32_t>(tree_.members.size());
    tree_.members.insert(tree_.members.end(), eb, ee);
    tree_.mem_begin[static_cast<size_t>(node)] = begin;
    tree_.mem_end[static_cast<size_t>(node)] = static_cast<int32_t>(tree_.members.size());
    double a = 0, b = 0;
    sp_.leaf_stats(eb, static_cast<size_t>(ee - eb), a, b);
    tree_.leaf_a[static_cast<size_t>(node)] = a;
    tree_.leaf_b[static_cast<size_t>(node)] = b;
    return node;
  }

  const Matrix& x_;
  const ForestParams& prm_;
  size_t mtry_;
  const std::vector<double>& est_w_;
  Splitter& sp_;
  GrowWorkspace& ws_;
  Rng& rng_;
  Tree& tree_;
};

// grow_weights select eligible units (weight > 0) and weight the criterion /
// estimation-half validity checks; kernel_weights is what predictions use.
template <class SplitterFactory>
Forest grow_forest(const Matrix& x, const ForestParams& prm, LabelKind kind,
                   const std::vector<double>& grow_weights,
                   std::vector<double> kernel_weights, SplitterFactory&& factory,
                   unsigned num_threads) {
  const size_t n = x.rows(), p = x.cols();
  validate(prm, p);
  if (grow_weights.size() != n) throw ParamError("weights length must equal n");
  for (double w : grow_weights)
    if (w < 0 || !std::isfinite(w)) throw ParamError("sample weights must be finite and nonnegative");

  std::vector<uint32_t> active;
  active.reserve(n);
  for (uint32_t i = 0; i < n; ++i)
    if (grow_weights[i] > 0) active.push_back(i);
  if (active.size() < 2)
    throw ParamError("need at least 2 positively weighted units, got " +
                     std::to_string(active.size()));

  Forest forest;
  forest.kind = kind;
  forest.params = prm;
  forest.n_train = static_cast<uint32_t>(n);
  forest.p = static_cast<uint32_t>(p);
  forest.sample_weights = std::move(kernel_weights);

  const auto n_active = active.size();
  auto s = static_cast<size_t>(
      std::ceil(prm.subsample_fraction * static_cast<double>(n_active)));
  s = std::min(std::max<size_t>(s, 2), n_active);
  auto split_size = static_cast<size_t>(
      std::llround(prm.honesty_fraction * static_cast<double>(s)));
  split_size = std::min(std::max<size_t>(split_size, 1), s - 1);
  forest.subsample_size = s;
  forest.split_half_size = split_size;

  const size_t mtry = resolve_mtry(prm, p);
  const size_t inbag_words = (n + 63) / 64;

  if (num_threads == 0) num_threads = default_thread_count();
  num_threads = static_cast<unsigned>(std::min<size_t>(num_threads, prm.num_trees));
  forest.trees.resize(prm.num_trees);

  std::vector<GrowWorkspace> workspaces(num_threads == 0 ? 1 : num_threads);
  using SplitterT = decltype(factory());
  std::vector<SplitterT> splitters;
  splitters.reserve(workspaces.size());
  for (size_t t = 0; t < workspaces.size(); ++t) splitters.push_back(factory());

  parallel_for(prm.num_trees, num_threads, [&](size_t ti, unsigned worker) {
    GrowWorkspace& ws = workspaces[worker];
    SplitterT& splitter = splitters[worker];
    Rng rng = Rng::stream(prm.seed, ti);

    ws.pool = active;
    rng.partial_shuffle(ws.pool, s);
    ws.split_ids.assign(ws.pool.begin(), ws.pool.begin() + static_cast<long>(split_size));
    ws.est_ids.assign(ws.pool.begin() + static_cast<long>(split_size),
                      ws.pool.begin() + static_cast<long>(s));
    std::sort(ws.split_ids.begin(), ws.split_ids.end());
    std::sort(ws.est_ids.begin(), ws.est_ids.end());

    Tree& tree = forest.trees[ti];
    tree.inbag.assign(inbag_words, 0);
    for (uint32_t id : ws.split_ids) tree.inbag[id >> 6] |= 1ULL << (id & 63);
    for (uint32_t id : ws.est_ids) tree.inbag[id >> 6] |= 1ULL << (id & 63);
    tree.split_ids = ws.split_ids;

    TreeBuilder<SplitterT> builder(x, prm, mtry, grow_weights, splitter, ws, rng, tree);
    builder.build(ws.split_ids.data(), ws.split_ids.data() + ws.split_ids.size(),
                  ws.est_ids.data(), ws.est_ids.data() + ws.est_ids.size());
  });

  return forest;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fitting.
// ---------------------------------------------------------------------------

// Leaf caches: a = sum w*y over members, b = sum w.
inline Forest fit_regression_forest(const Matrix& x, const std::vector<double>& labels,
                                    const std::vector<double>& sample_weights,
                                    const ForestParams& params, unsigned num_threads = 0) {
  if (labels.size() != x.rows()) throw ParamError("labels length must equal n");
  Forest forest = detail::grow_forest(
      x, params, LabelKind::regression, sample_weights, sample_weights,
      [&] {
        return detail::WeightedMeanSplitter(labels.data(), sample_weights.data(),
                                            params.alpha);
      },
      num_threads);
  forest.labels = labels;
  return forest;
}

inline Forest fit_regression_forest(const Matrix& x, const std::vector<double>& labels,
                                    const ForestParams& params, unsigned num_threads = 0) {
  return fit_regression_forest(x, labels, std::vector<double>(x.rows(), 1.0), params,
                               num_threads);
}

// ---------------------------------------------------------------------------
// Prediction.
// ---------------------------------------------------------------------------
namespace detail {
inline double leaf_mean(const Tree& tree, int32_t node) {
  const auto k = static_cast<size_t>(node);
  return tree.leaf_b[k] > 0 ? tree.leaf_a[k] / tree.leaf_b[k] : 0.0;
}
}  // namespace detail

inline std::vector<double> predict(const Forest& forest, const Matrix& x_new,
                                   unsigned num_threads = 0) {
  if (forest.kind != LabelKind::regression)
    throw ParamError("predict() expects a regression forest");
  if (x_new.cols() != forest.p)
    throw ParamError("prediction data has " + std::to_string(x_new.cols()) +
                     " columns, forest was trained with " + std::to_string(forest.p));
  std::vector<double> out(x_new.rows(), 0.0);
  parallel_for(x_new.rows(), num_threads, [&](size_t i, unsigned) {
    double acc = 0;
    for (const auto& tree : forest.trees)
      acc += detail::leaf_mean(tree, tree.leaf_for(x_new, i));
    out[i] = acc / static_cast<double>(forest.trees.size());
  });
  return out;
}

// OOB prediction for training row i averages trees whose subsample excludes i.
// A unit that is in-bag everywhere falls back to the full-forest prediction
// and increments *fallback_count.
inline std::vector<double> oob_predict(const Forest& forest, const Matrix& x_train,
                                       size_t* fallback_count = nullptr,
                                       unsigned num_threads = 0) {
  if (forest.kind != LabelKind::regression)
    throw ParamError("oob_predict() expects a regression forest");
  if (x_train.rows() != forest.n_train || x_train.cols() != forest.p)
    throw ParamError("oob_predict needs the original training matrix");
  std::vector<double> out(x_train.rows(), 0.0);
  std::atomic<size_t> fallbacks{0};
  parallel_for(x_train.rows(), num_threads, [&](size_t i, unsigned) {
    double acc = 0;
    size_t used = 0;
    for (const auto& tree : forest.trees) {
      if (tree.is_inbag(static_cast<uint32_t>(i))) continue;
      acc += detail::leaf_mean(tree, tree.leaf_for(x_train, i));
      ++used;
    }
    if (used == 0) {
      fallbacks.fetch_add(1);
      for (const auto& tree : forest.trees)
        acc += detail::leaf_mean(tree, tree.leaf_for(x_train, i));
      used = forest.trees.size();
    }
    out[i] = acc / static_cast<double>(used);
  });
  if (fallback_count) *fallback_count = fallbacks.load();
  return out;
}

// Forest kernel: alpha_i(x) = average over trees of
// sample_weight_i * 1{i in leaf(x)} / leaf weight. Rows sum to one.
inline std::vector<double> kernel_weights(const Forest& forest, const Matrix& m, size_t row) {
  if (m.cols() != forest.p) throw ParamError("kernel_weights column mismatch");
  std::vector<double> alpha(forest.n_train, 0.0);
  for (const auto& tree : forest.trees) {
    const auto node = static_cast<size_t>(tree.leaf_for(m, row));
    const int32_t b = tree.mem_begin[node], e = tree.mem_end[node];
    double total = 0;
    for (int32_t k = b; k < e; ++k) total += forest.sample_weights[tree.members[k]];
    if (!(total > 0)) continue;
    for (int32_t k = b; k < e; ++k) {
      const uint32_t id = tree.members[k];
      alpha[id] += forest.sample_weights[id] / total;
    }
  }
  for (auto& a : alpha) a /= static_cast<double>(forest.trees.size());
  return alpha;
}

// OOB kernel for a training row: averages only trees where `row` is
// out-of-bag (all trees when it never appears in-bag).
inline std::vector<double> kernel_weights_oob(const Forest& forest, const Matrix& m,
                                              size_t row) {
  if (m.cols() != forest.p) throw ParamError("kernel_weights column mismatch");
  std::vector<double> alpha(forest.n_train, 0.0);
  size_t used = 0;
  for (const auto& tree : forest.trees) {
    if (tree.is_inbag(static_cast<uint32_t>(row))) continue;
    const auto node = static_cast<size_t>(tree.leaf_for(m, row));
    const int32_t b = tree.mem_begin[node], e = tree.mem_end[node];
    double total = 0;
    for (int32_t k = b; k < e; ++k) total += forest.sample_weights[tree.members[k]];
    if (total > 0) {
      for (int32_t k = b; k < e; ++k) {
        const uint32_t id = tree.members[k];
        alpha[id] += forest.sample_weights[id] / total;
      }
    }
    ++used;
  }
  if (used == 0) return kernel_weights(forest, m, row);
  for (auto& a : alpha) a /= static_cast<double>(used);
  return alpha;
}

}  // namespace csurv
