// Censored survival data: CSV ingestion with schema mapping, validation,
// horizon truncation, and the descriptive summaries (histogram, group means).
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csurv/common.hpp"

namespace csurv {

// Column-major numeric matrix with named columns. Column-major because the
// forest split search touches one feature column at a time.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t n, std::vector<std::string> names)
      : n_(n), names_(std::move(names)), cols_(names_.size(), std::vector<double>(n, 0.0)) {}

  size_t rows() const { return n_; }
  size_t cols() const { return cols_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  double& at(size_t i, size_t j) { return cols_[j][i]; }
  double at(size_t i, size_t j) const { return cols_[j][i]; }
  const std::vector<double>& col(size_t j) const { return cols_[j]; }
  std::vector<double>& col(size_t j) { return cols_[j]; }

  std::vector<double> row(size_t i) const {
    std::vector<double> r(cols());
    for (size_t j = 0; j < cols(); ++j) r[j] = cols_[j][i];
    return r;
  }

  void append_column(const std::string& name, std::vector<double> values) {
    if (n_ == 0 && cols_.empty()) n_ = values.size();
    names_.push_back(name);
    cols_.push_back(std::move(values));
  }

 private:
  size_t n_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
};

struct ColumnSchema {
  std::string outcome;
  std::string treatment;
  std::string event;
  std::vector<std::string> covariates;

  static ColumnSchema jtpa() {
    return ColumnSchema{"days", "treatment", "delta",
                        {"age", "hsged", "white", "children", "married", "male"}};
  }
};

struct SurvivalDataset {
  Matrix x;               // n x p covariates
  std::vector<double> y;  // recorded time (days), >= 0
  std::vector<double> w;  // treatment indicator {0,1}
  std::vector<double> d;  // event indicator {0,1}; 1 = event observed

  size_t n() const { return y.size(); }
  size_t p() const { return x.cols(); }
};

struct TruncatedOutcome {
  std::vector<double> u;    // min(y, h)
  std::vector<uint8_t> dh;  // 1 = complete case at horizon
  double h = 0;
};

struct HistogramSpec {
  std::vector<double> bin_edges;  // n_bins + 1 edges over [min(y), max(y)]
  std::vector<size_t> counts_event;
  std::vector<size_t> counts_censored;
};

// ---------------------------------------------------------------------------
// CSV reading. Comma-separated, one header row, numeric body; quoted fields
// are accepted (the JTPA source quotes its header).
// ---------------------------------------------------------------------------
namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_number(const std::string& s, size_t row, const std::string& column) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  if (begin == end)
    throw ParseError("missing value at row " + std::to_string(row) + ", column '" + column + "'");
  double value = 0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError("non-numeric value '" + std::string(begin, end) + "' at row " +
                     std::to_string(row) + ", column '" + column + "'");
  if (!std::isfinite(value))
    throw ParseError("non-finite value at row " + std::to_string(row) + ", column '" + column +
                     "'");
  return value;
}

}  // namespace detail

inline void validate(const SurvivalDataset& ds, bool allow_no_censoring = false) {
  const size_t n = ds.n();
  if (n < 2) throw ParamError("dataset needs at least 2 rows, got " + std::to_string(n));
  if (ds.w.size() != n || ds.d.size() != n || ds.x.rows() != n)
    throw ParamError("dataset columns disagree on row count");
  size_t treated = 0, control = 0, events = 0, censored = 0;
  for (size_t i = 0; i < n; ++i) {
    if (ds.y[i] < 0) throw ParamError("outcome must be nonnegative (row " + std::to_string(i + 1) + ")");
    if (ds.w[i] != 0.0 && ds.w[i] != 1.0)
      throw ParamError("treatment must be 0/1 (row " + std::to_string(i + 1) + ")");
    if (ds.d[i] != 0.0 && ds.d[i] != 1.0)
      throw ParamError("event indicator must be 0/1 (row " + std::to_string(i + 1) + ")");
    (ds.w[i] == 1.0 ? treated : control)++;
    (ds.d[i] == 1.0 ? events : censored)++;
  }
  if (treated == 0 || control == 0) throw ParamError("need at least one treated and one control unit");
  if (events == 0) throw ParamError("need at least one observed event");
  if (censored == 0 && !allow_no_censoring)
    throw ParamError("no censored units; pass the no-censoring flag if this is intended");
}

inline SurvivalDataset load_csv(const std::string& path, const ColumnSchema& schema,
                                bool allow_no_censoring = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty data file: " + path);
  const auto names = detail::split_csv_line(header);
  std::map<std::string, size_t> index;
  for (size_t j = 0; j < names.size(); ++j) index.emplace(names[j], j);

  auto require = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end())
      throw SchemaError(std::string(role) + " column not found: '" + name + "'");
    return it->second;
  };
  const size_t oc = require(schema.outcome, "outcome");
  const size_t wc = require(schema.treatment, "treatment");
  const size_t ec = require(schema.event, "event");
  std::vector<size_t> xc;
  xc.reserve(schema.covariates.size());
  for (const auto& name : schema.covariates) xc.push_back(require(name, "covariate"));

  SurvivalDataset ds;
  std::vector<std::vector<double>> xcols(xc.size());
  std::string line;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != names.size())
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(names.size()));
    ds.y.push_back(detail::parse_number(fields[oc], row, schema.outcome));
    ds.w.push_back(detail::parse_number(fields[wc], row, schema.treatment));
    ds.d.push_back(detail::parse_number(fields[ec], row, schema.event));
    for (size_t j = 0; j < xc.size(); ++j)
      xcols[j].push_back(detail::parse_number(fields[xc[j]], row, schema.covariates[j]));
  }
  if (ds.y.empty()) throw IoError("data file has a header but no rows: " + path);
  ds.x = Matrix(ds.y.size(), schema.covariates);
  for (size_t j = 0; j < xc.size(); ++j) ds.x.col(j) = std::move(xcols[j]);
  validate(ds, allow_no_censoring);
  return ds;
}

// w -> 1 - w; everything else untouched.
inline SurvivalDataset relabel_treatment(SurvivalDataset ds) {
  for (auto& wi : ds.w) wi = 1.0 - wi;
  return ds;
}

inline TruncatedOutcome truncate(const SurvivalDataset& ds, double h) {
  if (!(h > 0)) throw ParamError("horizon must be positive");
  TruncatedOutcome out;
  out.h = h;
  const size_t n = ds.n();
  out.u.resize(n);
  out.dh.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.u[i] = std::min(ds.y[i], h);
    // Complete whenever the event is observed or the horizon is reached:
    // survival past h pins min(T, h) = h regardless of later censoring.
    out.dh[i] = (ds.d[i] == 1.0 || ds.y[i] >= h) ? 1 : 0;
  }
  return out;
}

inline HistogramSpec histogram(const SurvivalDataset& ds, size_t n_bins) {
  if (n_bins < 1) throw ParamError("histogram needs at least one bin");
  double lo = ds.y[0], hi = ds.y[0];
  for (double v : ds.y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  HistogramSpec spec;
  spec.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (size_t b = 0; b <= n_bins; ++b)
    spec.bin_edges[b] = lo + width * static_cast<double>(b);
  spec.bin_edges.back() = hi;
  spec.counts_event.assign(n_bins, 0);
  spec.counts_censored.assign(n_bins, 0);
  for (size_t i = 0; i < ds.n(); ++i) {
    size_t b = 0;
    if (width > 0) {
      b = static_cast<size_t>((ds.y[i] - lo) / width);
      if (b >= n_bins) b = n_bins - 1;  // max lands in the last bin
    }
    (ds.d[i] == 1.0 ? spec.counts_event[b] : spec.counts_censored[b])++;
  }
  return spec;
}

inline std::vector<std::pair<std::string, double>> group_covariate_means(
    const SurvivalDataset& ds, const std::vector<uint8_t>& mask) {
  if (mask.size() != ds.n()) throw ParamError("mask length must equal n");
  size_t count = 0;
  for (auto m : mask) count += (m != 0);
  if (count == 0) throw SelectionError("empty selection: mask selects no rows");
  std::vector<std::pair<std::string, double>> out;
  out.reserve(ds.p());
  for (size_t j = 0; j < ds.p(); ++j) {
    double s = 0;
    const auto& col = ds.x.col(j);
    for (size_t i = 0; i < ds.n(); ++i)
      if (mask[i]) s += col[i];
    out.emplace_back(ds.x.names()[j], s / static_cast<double>(count));
  }
  return out;
}

// Fingerprint gating OOB prediction: hash of (n, p, column names, first/last
// row digest).
inline uint64_t dataset_fingerprint(const SurvivalDataset& ds) {
  uint64_t h = fnv1a64(nullptr, 0);
  const uint64_t n = ds.n(), p = ds.p();
  h = fnv1a64(&n, sizeof n, h);
  h = fnv1a64(&p, sizeof p, h);
  for (const auto& name : ds.x.names()) h = fnv1a64(name.data(), name.size(), h);
  for (size_t i : {size_t{0}, ds.n() - 1}) {
    h = fnv1a64_append(h, ds.y[i]);
    h = fnv1a64_append(h, ds.w[i]);
    h = fnv1a64_append(h, ds.d[i]);
    for (size_t j = 0; j < ds.p(); ++j) h = fnv1a64_append(h, ds.x.at(i, j));
  }
  return h;
}

}  // namespace csurv
