// Versioned binary containers for forests and fitted models. Little-endian,
// IEEE-754 doubles, RNG identity embedded; round trips are lossless so
// deserialized predictions match to the bit. The model hash is the FNV-1a of
// the serialized bytes and is what the determinism checks compare.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "csurv/common.hpp"
#include "csurv/csf.hpp"
#include "csurv/forest.hpp"

namespace csurv {
namespace detail {

struct ByteWriter {
  std::string buf;

  void bytes(const void* p, size_t len) { buf.append(static_cast<const char*>(p), len); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void i32(int32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void f64(double v) {
    static_assert(sizeof(double) == 8);
    bytes(&v, 8);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  template <class T>
  void vec(const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(T));
  }
};

struct ByteReader {
  const char* p;
  const char* end;

  explicit ByteReader(const std::string& s) : p(s.data()), end(s.data() + s.size()) {}

  void bytes(void* out, size_t len) {
    if (static_cast<size_t>(end - p) < len) throw ParseError("truncated model file");
    std::memcpy(out, p, len);
    p += len;
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  int32_t i32() {
    int32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const uint64_t len = u64();
    if (static_cast<uint64_t>(end - p) < len) throw ParseError("truncated model file");
    std::string s(p, p + len);
    p += len;
    return s;
  }
  template <class T>
  std::vector<T> vec() {
    static_assert(std::is_trivially_copyable_v<T>);
    const uint64_t len = u64();
    if (static_cast<uint64_t>(end - p) < len * sizeof(T))
      throw ParseError("truncated model file");
    std::vector<T> v(len);
    bytes(v.data(), len * sizeof(T));
    return v;
  }
};

inline void write_forest_params(ByteWriter& w, const ForestParams& p) {
  w.u64(p.num_trees);
  w.f64(p.subsample_fraction);
  w.f64(p.honesty_fraction);
  w.u64(p.mtry);
  w.u64(p.min_node_size);
  w.f64(p.alpha);
  w.u64(p.seed);
}

inline ForestParams read_forest_params(ByteReader& r) {
  ForestParams p;
  p.num_trees = r.u64();
  p.subsample_fraction = r.f64();
  p.honesty_fraction = r.f64();
  p.mtry = r.u64();
  p.min_node_size = r.u64();
  p.alpha = r.f64();
  p.seed = r.u64();
  return p;
}

inline void write_forest(ByteWriter& w, const Forest& f) {
  w.u8(static_cast<uint8_t>(f.kind));
  write_forest_params(w, f.params);
  w.u32(f.n_train);
  w.u32(f.p);
  w.u64(f.subsample_size);
  w.u64(f.split_half_size);
  w.vec(f.sample_weights);
  w.vec(f.labels);
  w.vec(f.grid.points);
  w.vec(f.surv_time);
  w.vec(f.surv_event);
  w.vec(f.cz_wres);
  w.vec(f.cz_ures);
  w.vec(f.cz_omega);
  w.u64(f.trees.size());
  for (const auto& t : f.trees) {
    w.vec(t.feature);
    w.vec(t.threshold);
    w.vec(t.left);
    w.vec(t.right);
    w.vec(t.mem_begin);
    w.vec(t.mem_end);
    w.vec(t.leaf_a);
    w.vec(t.leaf_b);
    w.vec(t.members);
    w.vec(t.inbag);
  }
}

inline Forest read_forest(ByteReader& r) {
  Forest f;
  f.kind = static_cast<LabelKind>(r.u8());
  f.params = read_forest_params(r);
  f.n_train = r.u32();
  f.p = r.u32();
  f.subsample_size = r.u64();
  f.split_half_size = r.u64();
  f.sample_weights = r.vec<double>();
  f.labels = r.vec<double>();
  f.grid.points = r.vec<double>();
  f.surv_time = r.vec<double>();
  f.surv_event = r.vec<uint8_t>();
  f.cz_wres = r.vec<double>();
  f.cz_ures = r.vec<double>();
  f.cz_omega = r.vec<double>();
  f.trees.resize(r.u64());
  std::vector<uint8_t> is_member(f.n_train, 0);
  for (auto& t : f.trees) {
    t.feature = r.vec<int32_t>();
    t.threshold = r.vec<double>();
    t.left = r.vec<int32_t>();
    t.right = r.vec<int32_t>();
    t.mem_begin = r.vec<int32_t>();
    t.mem_end = r.vec<int32_t>();
    t.leaf_a = r.vec<double>();
    t.leaf_b = r.vec<double>();
    t.members = r.vec<uint32_t>();
    t.inbag = r.vec<uint64_t>();
    // split half = in-bag ids that are not estimation members
    for (uint32_t id : t.members) is_member[id] = 1;
    t.split_ids.clear();
    for (uint32_t id = 0; id < f.n_train; ++id)
      if (t.is_inbag(id) && !is_member[id]) t.split_ids.push_back(id);
    for (uint32_t id : t.members) is_member[id] = 0;
  }
  return f;
}

constexpr char kForestMagic[9] = "CSRVFRST";
constexpr char kModelMagic[9] = "CSRVMODL";
constexpr uint32_t kFormatVersion = 1;

}  // namespace detail

inline std::string serialize_forest(const Forest& f) {
  detail::ByteWriter w;
  w.bytes(detail::kForestMagic, 8);
  w.u32(detail::kFormatVersion);
  w.str(kRngIdentity);
  detail::write_forest(w, f);
  return std::move(w.buf);
}

inline Forest deserialize_forest(const std::string& bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, detail::kForestMagic, 8) != 0)
    throw ParseError("not a forest file (bad magic)");
  if (r.u32() != detail::kFormatVersion) throw ParseError("unsupported forest file version");
  r.str();  // rng identity, informational
  return detail::read_forest(r);
}

inline std::string serialize_model(const CsfModel& m) {
  detail::ByteWriter w;
  w.bytes(detail::kModelMagic, 8);
  w.u32(detail::kFormatVersion);
  w.str(kRngIdentity);

  const auto& p = m.params;
  w.f64(p.horizon);
  w.u8(static_cast<uint8_t>(p.target));
  w.u8(static_cast<uint8_t>(p.w_hat_mode));
  w.f64(p.w_hat_value);
  w.u8(static_cast<uint8_t>(p.censoring_model));
  w.f64(p.g_floor);
  detail::write_forest_params(w, p.propensity_forest);
  detail::write_forest_params(w, p.censoring_forest);
  detail::write_forest_params(w, p.outcome_forest);
  detail::write_forest_params(w, p.cate_forest);
  w.u64(p.grid_max_points);
  w.u64(p.seed);

  w.u32(m.n);
  w.u32(m.p);
  w.u64(m.column_names.size());
  for (const auto& name : m.column_names) w.str(name);
  w.u64(m.data_fingerprint);

  w.vec(m.nuisances.e_hat);
  w.vec(m.nuisances.m_hat);
  w.vec(m.nuisances.g_hat_at_u);
  w.f64(m.nuisances.min_g_before_floor);
  w.u64(m.nuisances.floored_count);

  w.vec(m.u_outcome);
  w.vec(m.dh);
  w.vec(m.w);
  w.vec(m.ipcw);
  w.vec(m.wres);
  w.vec(m.ures);
  w.vec(m.tau_oob);

  const auto& d = m.diagnostics;
  w.u64(d.n);
  w.u64(d.p);
  w.f64(d.censoring_rate);
  w.f64(d.incomplete_rate);
  w.f64(d.min_g_before_floor);
  w.u64(d.floored_count);
  w.u64(d.overlap_violations);
  w.u8(d.overlap_warning ? 1 : 0);
  w.u64(d.oob_fallback_outcome);
  w.u64(d.oob_fallback_cate);
  w.f64(d.mean_u_residual);
  w.f64(d.sd_u_residual);
  w.f64(d.mean_w_residual);
  w.f64(d.sd_w_residual);

  w.u8(m.propensity_forest.has_value() ? 1 : 0);
  if (m.propensity_forest) detail::write_forest(w, *m.propensity_forest);
  w.u8(m.censoring_forest.has_value() ? 1 : 0);
  if (m.censoring_forest) detail::write_forest(w, *m.censoring_forest);
  w.u8(m.censoring_forest_control.has_value() ? 1 : 0);
  if (m.censoring_forest_control) detail::write_forest(w, *m.censoring_forest_control);
  detail::write_forest(w, m.outcome_forest);
  detail::write_forest(w, m.final_forest);
  return std::move(w.buf);
}

inline CsfModel deserialize_model(const std::string& bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, detail::kModelMagic, 8) != 0)
    throw ParseError("not a model file (bad magic)");
  if (r.u32() != detail::kFormatVersion) throw ParseError("unsupported model file version");
  r.str();  // rng identity

  CsfModel m;
  auto& p = m.params;
  p.horizon = r.f64();
  p.target = static_cast<Target>(r.u8());
  p.w_hat_mode = static_cast<WHatMode>(r.u8());
  p.w_hat_value = r.f64();
  p.censoring_model = static_cast<CensoringModel>(r.u8());
  p.g_floor = r.f64();
  p.propensity_forest = detail::read_forest_params(r);
  p.censoring_forest = detail::read_forest_params(r);
  p.outcome_forest = detail::read_forest_params(r);
  p.cate_forest = detail::read_forest_params(r);
  p.grid_max_points = r.u64();
  p.seed = r.u64();

  m.n = r.u32();
  m.p = r.u32();
  m.column_names.resize(r.u64());
  for (auto& name : m.column_names) name = r.str();
  m.data_fingerprint = r.u64();

  m.nuisances.e_hat = r.vec<double>();
  m.nuisances.m_hat = r.vec<double>();
  m.nuisances.g_hat_at_u = r.vec<double>();
  m.nuisances.min_g_before_floor = r.f64();
  m.nuisances.floored_count = r.u64();

  m.u_outcome = r.vec<double>();
  m.dh = r.vec<uint8_t>();
  m.w = r.vec<double>();
  m.ipcw = r.vec<double>();
  m.wres = r.vec<double>();
  m.ures = r.vec<double>();
  m.tau_oob = r.vec<double>();

  auto& d = m.diagnostics;
  d.n = r.u64();
  d.p = r.u64();
  d.censoring_rate = r.f64();
  d.incomplete_rate = r.f64();
  d.min_g_before_floor = r.f64();
  d.floored_count = r.u64();
  d.overlap_violations = r.u64();
  d.overlap_warning = r.u8() != 0;
  d.oob_fallback_outcome = r.u64();
  d.oob_fallback_cate = r.u64();
  d.mean_u_residual = r.f64();
  d.sd_u_residual = r.f64();
  d.mean_w_residual = r.f64();
  d.sd_w_residual = r.f64();

  if (r.u8()) m.propensity_forest = detail::read_forest(r);
  if (r.u8()) m.censoring_forest = detail::read_forest(r);
  if (r.u8()) m.censoring_forest_control = detail::read_forest(r);
  m.outcome_forest = detail::read_forest(r);
  m.final_forest = detail::read_forest(r);
  return m;
}

inline uint64_t model_hash(const CsfModel& m) {
  const std::string bytes = serialize_model(m);
  return fnv1a64(bytes.data(), bytes.size());
}

inline void save_model(const CsfModel& m, const std::string& path) {
  const std::string bytes = serialize_model(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed while writing model file: " + path);
}

inline CsfModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace csurv
