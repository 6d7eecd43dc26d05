// csurv command line: fit/predict/inference/report/simulate plus a pinned
// downloader for the JTPA data. Results go to stdout, progress to stderr,
// and every error family maps to its own exit code.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csurv/csf.hpp"
#include "csurv/dataset.hpp"
#include "csurv/inference.hpp"
#include "csurv/serialize.hpp"
#include "csurv/simulate.hpp"
#include "csurv/svg.hpp"
#include "httplib.h"
#include "json.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace csurv;

constexpr const char* kJtpaUrl =
    "https://raw.githubusercontent.com/GillesCrommen/DCC/"
    "748bd7f98feccad09205ee3df76df5ba740cc3d7/clean_dataset_JTPA.csv";
constexpr const char* kJtpaSha256 =
    "b013a9b8f957d93857fa7ad13b766f1f513f066fadf68800588fd9dbc8f86b29";

enum ExitCode {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kIo = 3,
  kSchema = 4,
  kParse = 5,
  kParam = 6,
  kSelection = 7,
  kLinAlg = 8,
  kFingerprint = 9,
  kPrediction = 10,
};

struct SchemaOpts {
  std::string preset = "custom";
  std::string outcome, treatment, event;
  std::string covariates;  // comma separated
  bool no_censoring_ok = false;
};

void add_schema_options(CLI::App* cmd, SchemaOpts& s) {
  cmd->add_option("--schema", s.preset, "Column preset: jtpa, sim, or custom")
      ->check(CLI::IsMember({"jtpa", "sim", "custom"}))
      ->capture_default_str();
  cmd->add_option("--outcome", s.outcome, "Outcome (time) column name");
  cmd->add_option("--treatment", s.treatment, "Treatment column name");
  cmd->add_option("--event", s.event, "Event indicator column name");
  cmd->add_option("--covariates", s.covariates, "Comma-separated covariate column names");
  cmd->add_flag("--no-censoring-ok", s.no_censoring_ok,
                "Accept data without any censored rows");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty data file: " + path);
  return detail::split_csv_line(header);
}

ColumnSchema resolve_schema(const SchemaOpts& s, const std::string& data_path) {
  if (s.preset == "jtpa") return ColumnSchema::jtpa();
  if (s.preset == "sim") {
    ColumnSchema schema{"y", "w", "d", {}};
    for (const auto& name : csv_header(data_path))
      if (!name.empty() && name[0] == 'x') schema.covariates.push_back(name);
    if (schema.covariates.empty())
      throw SchemaError("sim preset found no x* covariate columns in " + data_path);
    return schema;
  }
  if (s.outcome.empty() || s.treatment.empty() || s.event.empty() || s.covariates.empty())
    throw ParamError(
        "custom schema needs --outcome, --treatment, --event and --covariates");
  return ColumnSchema{s.outcome, s.treatment, s.event, split_commas(s.covariates)};
}

struct FitOpts {
  std::string data, out;
  SchemaOpts schema;
  bool relabel = false;
  double horizon = 0;
  std::string target = "rmst";
  std::string w_hat = "estimate";
  std::string censoring_model = "km";
  double g_floor = 0.05;
  size_t num_trees = 2000, nuisance_trees = 500;
  size_t min_node_size = 25, cens_min_node_size = 15, nuisance_min_node_size = 5;
  size_t mtry = 0;
  double subsample_fraction = 0.5, honesty_fraction = 0.5, alpha = 0.05;
  size_t grid_max_points = 50;
  uint64_t seed = 42;
};

CsfParams to_params(const FitOpts& o) {
  CsfParams p;
  p.horizon = o.horizon;
  p.target = o.target == "survival-probability" ? Target::survival_probability : Target::rmst;
  if (o.w_hat == "auto-mean") {
    p.w_hat_mode = WHatMode::auto_mean;
  } else if (o.w_hat == "estimate") {
    p.w_hat_mode = WHatMode::estimate;
  } else {
    p.w_hat_mode = WHatMode::constant;
    try {
      p.w_hat_value = std::stod(o.w_hat);
    } catch (const std::exception&) {
      throw ParamError("--w-hat must be auto-mean, estimate, or a number in (0,1)");
    }
  }
  p.censoring_model =
      o.censoring_model == "forest" ? CensoringModel::forest : CensoringModel::km;
  p.g_floor = o.g_floor;
  p.grid_max_points = o.grid_max_points;
  p.seed = o.seed;
  auto common = [&](ForestParams& f, size_t trees, size_t mns) {
    f.num_trees = trees;
    f.min_node_size = mns;
    f.mtry = o.mtry;
    f.subsample_fraction = o.subsample_fraction;
    f.honesty_fraction = o.honesty_fraction;
    f.alpha = o.alpha;
  };
  common(p.propensity_forest, o.nuisance_trees, o.nuisance_min_node_size);
  common(p.censoring_forest, o.nuisance_trees, o.cens_min_node_size);
  common(p.outcome_forest, o.nuisance_trees, o.nuisance_min_node_size);
  common(p.cate_forest, o.num_trees, o.min_node_size);
  return p;
}

json diagnostics_json(const CsfModel& model) {
  const auto& d = model.diagnostics;
  json out;
  out["n"] = d.n;
  out["p"] = d.p;
  out["censoring_rate"] = d.censoring_rate;
  out["incomplete_rate"] = d.incomplete_rate;
  out["min_g_before_floor"] = d.min_g_before_floor;
  out["floored_count"] = d.floored_count;
  out["overlap_violations"] = d.overlap_violations;
  out["overlap_warning"] = d.overlap_warning;
  out["oob_fallback_outcome"] = d.oob_fallback_outcome;
  out["oob_fallback_cate"] = d.oob_fallback_cate;
  out["mean_u_residual"] = d.mean_u_residual;
  out["sd_u_residual"] = d.sd_u_residual;
  out["mean_w_residual"] = d.mean_w_residual;
  out["sd_w_residual"] = d.sd_w_residual;
  out["data_fingerprint"] = hex64(model.data_fingerprint);
  out["model_hash"] = hex64(model_hash(model));
  return out;
}

void require_fingerprint(const CsfModel& model, const SurvivalDataset& ds,
                         const char* why) {
  if (model.n != ds.n() || model.p != ds.p() ||
      model.data_fingerprint != dataset_fingerprint(ds))
    throw FingerprintError(std::string(why) +
                           " requires the original training data; the supplied file does "
                           "not match the model's fingerprint");
}

SurvivalDataset load_for_model(const CsfModel& model, const std::string& path,
                               const SchemaOpts& opts) {
  SchemaOpts s = opts;
  ColumnSchema schema = resolve_schema(s, path);
  auto ds = load_csv(path, schema, true);
  // fit-time relabeling is baked into model.w; reapply when it differs
  if (ds.n() == model.n) {
    size_t same = 0, flipped = 0;
    for (size_t i = 0; i < ds.n(); ++i) {
      same += ds.w[i] == model.w[i];
      flipped += 1.0 - ds.w[i] == model.w[i];
    }
    if (flipped == ds.n() && same != ds.n()) ds = relabel_treatment(std::move(ds));
  }
  return ds;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(2 * len);
  static const char* digits = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) {
    hex += digits[digest[i] >> 4];
    hex += digits[digest[i] & 0xF];
  }
  return hex;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

int run_fit(const FitOpts& o, unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  ColumnSchema schema = resolve_schema(o.schema, o.data);
  auto ds = load_csv(o.data, schema, o.schema.no_censoring_ok);
  if (o.relabel) ds = relabel_treatment(std::move(ds));
  auto model = fit(ds, to_params(o), threads);
  save_model(model, o.out);
  const auto t1 = std::chrono::steady_clock::now();
  json out = diagnostics_json(model);
  out["model_file"] = o.out;
  out["fit_seconds"] = std::chrono::duration<double>(t1 - t0).count();
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const SchemaOpts& schema, bool oob, const std::string& out_path,
                unsigned threads) {
  auto model = load_model(model_path);
  auto ds = load_for_model(model, data_path, schema);
  std::vector<double> tau;
  if (oob) {
    require_fingerprint(model, ds, "--oob");
    tau = model.tau_oob;
  } else {
    tau = predict_cate(model, ds.x, threads);
  }
  std::ostringstream os;
  os << "row,tau_hat\n";
  char buf[64];
  for (size_t i = 0; i < tau.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, tau[i]);
    os << buf;
  }
  if (out_path == "-")
    std::cout << os.str();
  else
    write_text_file(out_path, os.str());
  return kOk;
}

int run_ate(const std::string& model_path, const std::string& format) {
  auto model = load_model(model_path);
  auto res = average_treatment_effect(dr_scores(model));
  if (format == "table") {
    std::printf("estimate  std.err\n%8.1f %8.1f\n", res.estimate, res.std_err);
  } else {
    json out;
    out["estimate"] = res.estimate;
    out["std_err"] = res.std_err;
    std::cout << out.dump(2) << "\n";
  }
  return kOk;
}

int run_blp(const std::string& model_path, const std::string& data_path,
            const SchemaOpts& schema, const std::string& covariates,
            const std::string& format) {
  auto model = load_model(model_path);
  auto ds = load_for_model(model, data_path, schema);
  require_fingerprint(model, ds, "best linear projection");
  Matrix a = ds.x;
  if (!covariates.empty()) {
    const auto wanted = split_commas(covariates);
    Matrix sub(ds.n(), wanted);
    for (size_t j = 0; j < wanted.size(); ++j) {
      bool found = false;
      for (size_t k = 0; k < ds.x.cols(); ++k) {
        if (ds.x.names()[k] == wanted[j]) {
          sub.col(j) = ds.x.col(k);
          found = true;
          break;
        }
      }
      if (!found) throw SchemaError("covariate column not found: '" + wanted[j] + "'");
    }
    a = std::move(sub);
  }
  auto blp = best_linear_projection(dr_scores(model), a);
  if (format == "table") {
    std::printf("Best linear projection of the conditional average treatment effect.\n");
    std::printf("Confidence intervals are heteroskedasticity-robust (HC3):\n\n");
    std::printf("%-22s %10s %10s %8s %9s\n", "", "Estimate", "Std. Error", "t value",
                "Pr(>|t|)");
    for (const auto& c : blp.coefficients)
      std::printf("%-22s %10.3f %10.3f %8.2f %9.3f %s\n", c.name.c_str(), c.estimate,
                  c.std_error, c.t_value, c.p_value, significance_stars(c.p_value).c_str());
    std::printf("---\nSignif. codes:  0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n");
  } else {
    json out = json::array();
    for (const auto& c : blp.coefficients) {
      json row;
      row["name"] = c.name;
      row["estimate"] = c.estimate;
      row["std_error"] = c.std_error;
      row["t_value"] = c.t_value;
      row["p_value"] = c.p_value;
      out.push_back(row);
    }
    std::cout << out.dump(2) << "\n";
  }
  return kOk;
}

int run_rate(const std::string& model_path, size_t n_bootstrap, uint64_t seed,
             const std::string& toc_csv, const std::string& svg_path,
             const std::string& format, unsigned threads) {
  auto model = load_model(model_path);
  auto scores = dr_scores(model);
  auto res = rate(scores, model.tau_oob, n_bootstrap, seed, threads);
  const TocCurve thin = thin_toc(res.toc, 200);
  if (!toc_csv.empty()) {
    std::ostringstream os;
    os << "q,toc\n";
    char buf[80];
    for (size_t i = 0; i < thin.q_grid.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", thin.q_grid[i], thin.toc_values[i]);
      os << buf;
    }
    write_text_file(toc_csv, os.str());
  }
  if (!svg_path.empty()) {
    const auto se = toc_std_errors(scores, model.tau_oob, thin.q_grid, n_bootstrap, seed,
                                   threads);
    write_toc_svg(svg_path, thin.q_grid, thin.toc_values, se,
                  "TOC: by decreasing CATE estimates");
  }
  if (format == "table") {
    std::printf("AUTOC: %.2f +/- %.2f\n", res.autoc_estimate, 1.96 * res.std_err);
  } else {
    json out;
    out["autoc_estimate"] = res.autoc_estimate;
    out["std_err"] = res.std_err;
    out["conf95_halfwidth"] = 1.96 * res.std_err;
    out["n_bootstrap"] = res.n_bootstrap;
    std::cout << out.dump(2) << "\n";
  }
  return kOk;
}

int run_report(const std::string& model_path, const std::string& data_path,
               const SchemaOpts& schema, double top_fraction,
               const std::string& histogram_svg, size_t bins, const std::string& format) {
  auto model = load_model(model_path);
  auto ds = load_for_model(model, data_path, schema);
  require_fingerprint(model, ds, "report");
  if (!(top_fraction > 0 && top_fraction < 1))
    throw ParamError("--top-fraction must lie in (0, 1)");
  const auto& tau = model.tau_oob;
  const double cut = quantile_type7(tau, 1.0 - top_fraction);
  std::vector<uint8_t> top(ds.n(), 0), all(ds.n(), 1);
  for (size_t i = 0; i < ds.n(); ++i) top[i] = tau[i] >= cut ? 1 : 0;
  const auto full_means = group_covariate_means(ds, all);
  const auto top_means = group_covariate_means(ds, top);
  const double q[6] = {quantile_type7(tau, 0),    quantile_type7(tau, 0.25),
                       quantile_type7(tau, 0.5),  mean_of(tau),
                       quantile_type7(tau, 0.75), quantile_type7(tau, 1.0)};

  if (!histogram_svg.empty())
    write_histogram_svg(histogram_svg, histogram(ds, bins), model.params.horizon);

  const std::string top_label =
      "top." + std::to_string(static_cast<int>(std::lround(top_fraction * 100)));
  if (format == "table") {
    std::printf("OOB CATE summary\n");
    std::printf("%8s %8s %8s %8s %8s %8s\n", "Min.", "1st Qu.", "Median", "Mean", "3rd Qu.",
                "Max.");
    std::printf("%8.0f %8.0f %8.0f %8.0f %8.0f %8.0f\n\n", q[0], q[1], q[2], q[3], q[4],
                q[5]);
    std::printf("%-12s", "");
    for (const auto& [name, _] : full_means) std::printf(" %10s", name.c_str());
    std::printf("\n%-12s", "full.sample");
    for (const auto& [_, mean] : full_means) std::printf(" %10.2f", mean);
    std::printf("\n%-12s", top_label.c_str());
    for (const auto& [_, mean] : top_means) std::printf(" %10.2f", mean);
    std::printf("\n");
  } else {
    json out;
    out["cate_summary"] = {{"min", q[0]},  {"q25", q[1]}, {"median", q[2]},
                           {"mean", q[3]}, {"q75", q[4]}, {"max", q[5]}};
    json fm, tm;
    for (const auto& [name, mean] : full_means) fm[name] = mean;
    for (const auto& [name, mean] : top_means) tm[name] = mean;
    out["full_sample_means"] = fm;
    out[top_label] = tm;
    out["top_fraction"] = top_fraction;
    out["cate_threshold"] = cut;
    std::cout << out.dump(2) << "\n";
  }
  return kOk;
}

struct SimulateOpts {
  size_t n = 1000, p = 2;
  std::string effect = "constant";
  double effect_a = 0, effect_b = 0;
  double baseline_rate = 0.01, censoring_rate = 0, treat_fraction = 0.5, horizon = 720;
  uint64_t seed = 42;
  std::string out, truth_out;
};

int run_simulate_cmd(const SimulateOpts& o) {
  SimulationSpec spec;
  spec.n = o.n;
  spec.p = o.p;
  spec.effect = o.effect == "step"     ? EffectShape::step
                : o.effect == "linear" ? EffectShape::linear
                                       : EffectShape::constant;
  spec.effect_a = o.effect_a;
  spec.effect_b = o.effect_b;
  spec.baseline_rate = o.baseline_rate;
  spec.censoring_rate = o.censoring_rate;
  spec.treat_fraction = o.treat_fraction;
  spec.horizon = o.horizon;
  spec.seed = o.seed;
  auto sim = run_simulate(spec);

  char buf[256];
  {
    std::ostringstream os;
    os << "y,w,d";
    for (size_t j = 0; j < spec.p; ++j) os << ",x" << j;
    os << "\n";
    for (size_t i = 0; i < spec.n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%g,%g", sim.data.y[i], sim.data.w[i],
                    sim.data.d[i]);
      os << buf;
      for (size_t j = 0; j < spec.p; ++j) {
        std::snprintf(buf, sizeof buf, ",%.17g", sim.data.x.at(i, j));
        os << buf;
      }
      os << "\n";
    }
    write_text_file(o.out, os.str());
  }
  if (!o.truth_out.empty()) {
    std::ostringstream os;
    os << "true_cate,true_m0,true_m1,censor_prob\n";
    for (size_t i = 0; i < spec.n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", sim.true_cate[i],
                    sim.true_m0[i], sim.true_m1[i], sim.censor_prob[i]);
      os << buf;
    }
    write_text_file(o.truth_out, os.str());
  }
  double censored = 0, analytic = 0;
  for (size_t i = 0; i < spec.n; ++i) {
    censored += sim.data.d[i] == 0.0;
    analytic += sim.censor_prob[i];
  }
  json out;
  out["n"] = spec.n;
  out["true_ate"] = sim.true_ate;
  out["empirical_censoring_rate"] = censored / static_cast<double>(spec.n);
  out["analytic_censoring_rate"] = analytic / static_cast<double>(spec.n);
  out["data_file"] = o.out;
  if (!o.truth_out.empty()) out["truth_file"] = o.truth_out;
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int run_fetch_jtpa(const std::string& out_path, const std::string& url, bool insecure) {
  // split scheme://host/path
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ParamError("malformed url: " + url);
  const auto host_begin = scheme_end + 3;
  const auto path_begin = url.find('/', host_begin);
  if (path_begin == std::string::npos) throw ParamError("malformed url: " + url);
  const std::string origin = url.substr(0, path_begin);
  const std::string path = url.substr(path_begin);

  std::cerr << "fetching " << url << "\n";
  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  if (insecure) client.enable_server_certificate_verification(false);
  auto res = client.Get(path);
  if (!res)
    throw IoError("download failed: " + httplib::to_string(res.error()) + " (" + url + ")");
  if (res->status != 200)
    throw IoError("download failed with HTTP status " + std::to_string(res->status));
  const std::string digest = sha256_hex(res->body);
  if (digest != kJtpaSha256)
    throw ParseError("downloaded file does not match the pinned sha256 (" + digest + ")");
  write_text_file(out_path, res->body);
  json out;
  out["file"] = out_path;
  out["bytes"] = res->body.size();
  out["sha256"] = digest;
  std::cout << out.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"csurv: causal survival forests for right-censored treatment effects"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads (default: CSURV_THREADS env or hardware)");

  FitOpts fit_opts;
  auto* cmd_fit = app.add_subcommand("fit", "Fit a causal survival forest and save it");
  cmd_fit->add_option("--data", fit_opts.data, "Training CSV")->required();
  add_schema_options(cmd_fit, fit_opts.schema);
  cmd_fit->add_flag("--relabel-treatment", fit_opts.relabel, "Replace w by 1 - w");
  cmd_fit->add_option("--horizon", fit_opts.horizon, "Truncation horizon h")->required();
  cmd_fit->add_option("--target", fit_opts.target, "rmst or survival-probability")
      ->check(CLI::IsMember({"rmst", "survival-probability"}))
      ->capture_default_str();
  cmd_fit->add_option("--w-hat", fit_opts.w_hat,
                      "auto-mean, estimate, or a constant propensity in (0,1)")
      ->capture_default_str();
  cmd_fit->add_option("--censoring-model", fit_opts.censoring_model, "km or forest")
      ->check(CLI::IsMember({"km", "forest"}))
      ->capture_default_str();
  cmd_fit->add_option("--g-floor", fit_opts.g_floor)->capture_default_str();
  cmd_fit->add_option("--num-trees", fit_opts.num_trees, "Trees in the CATE forest")
      ->capture_default_str();
  cmd_fit->add_option("--nuisance-trees", fit_opts.nuisance_trees)->capture_default_str();
  cmd_fit->add_option("--min-node-size", fit_opts.min_node_size, "CATE forest leaf floor")
      ->capture_default_str();
  cmd_fit->add_option("--cens-min-node-size", fit_opts.cens_min_node_size)
      ->capture_default_str();
  cmd_fit->add_option("--nuisance-min-node-size", fit_opts.nuisance_min_node_size)
      ->capture_default_str();
  cmd_fit->add_option("--mtry", fit_opts.mtry, "0 = min(p, ceil(sqrt(p)+20))")
      ->capture_default_str();
  cmd_fit->add_option("--subsample-fraction", fit_opts.subsample_fraction)
      ->capture_default_str();
  cmd_fit->add_option("--honesty-fraction", fit_opts.honesty_fraction)
      ->capture_default_str();
  cmd_fit->add_option("--alpha", fit_opts.alpha, "Child balance floor")
      ->capture_default_str();
  cmd_fit->add_option("--grid-max-points", fit_opts.grid_max_points)->capture_default_str();
  cmd_fit->add_option("--seed", fit_opts.seed)->capture_default_str();
  cmd_fit->add_option("--out", fit_opts.out, "Model file to write")->required();

  std::string p_model, p_data, p_out = "-";
  bool p_oob = false;
  SchemaOpts p_schema;
  auto* cmd_predict = app.add_subcommand("predict", "Per-row CATE predictions");
  cmd_predict->add_option("--model", p_model)->required();
  cmd_predict->add_option("--data", p_data)->required();
  add_schema_options(cmd_predict, p_schema);
  cmd_predict->add_flag("--oob", p_oob, "Out-of-bag predictions (training data only)");
  cmd_predict->add_option("--out", p_out, "CSV path or - for stdout")
      ->capture_default_str();

  std::string a_model, a_format = "json";
  auto* cmd_ate = app.add_subcommand("ate", "Doubly robust average treatment effect");
  cmd_ate->add_option("--model", a_model)->required();
  cmd_ate->add_option("--format", a_format)->check(CLI::IsMember({"json", "table"}));

  std::string b_model, b_data, b_cov, b_format = "json";
  SchemaOpts b_schema;
  auto* cmd_blp = app.add_subcommand("blp", "Best linear projection of the CATE");
  cmd_blp->add_option("--model", b_model)->required();
  cmd_blp->add_option("--data", b_data)->required();
  add_schema_options(cmd_blp, b_schema);
  cmd_blp->add_option("--projection-covariates", b_cov,
                      "Comma-separated subset (default: all covariates)");
  cmd_blp->add_option("--format", b_format)->check(CLI::IsMember({"json", "table"}));

  std::string r_model, r_toc_csv, r_svg, r_format = "json";
  size_t r_bootstrap = 200;
  uint64_t r_seed = 42;
  auto* cmd_rate = app.add_subcommand("rate", "Rank-average treatment effect (AUTOC)");
  cmd_rate->add_option("--model", r_model)->required();
  cmd_rate->add_option("--bootstrap", r_bootstrap)->capture_default_str();
  cmd_rate->add_option("--seed", r_seed)->capture_default_str();
  cmd_rate->add_option("--toc-csv", r_toc_csv, "Write the TOC curve as CSV");
  cmd_rate->add_option("--svg", r_svg, "Write the TOC plot with 95% bars");
  cmd_rate->add_option("--format", r_format)->check(CLI::IsMember({"json", "table"}));

  std::string t_model, t_data, t_hist;
  SchemaOpts t_schema;
  double t_top = 0.2;
  size_t t_bins = 30;
  std::string t_format = "json";
  auto* cmd_report = app.add_subcommand(
      "report", "CATE summary and covariate means, full sample vs top fraction");
  cmd_report->add_option("--model", t_model)->required();
  cmd_report->add_option("--data", t_data)->required();
  add_schema_options(cmd_report, t_schema);
  cmd_report->add_option("--top-fraction", t_top)->capture_default_str();
  cmd_report->add_option("--histogram-svg", t_hist, "Write outcome histogram SVG");
  cmd_report->add_option("--bins", t_bins, "Histogram bins")->capture_default_str();
  cmd_report->add_option("--format", t_format)->check(CLI::IsMember({"json", "table"}));

  SimulateOpts sim_opts;
  auto* cmd_sim = app.add_subcommand("simulate", "Draw a synthetic censored dataset");
  cmd_sim->add_option("--n", sim_opts.n)->capture_default_str();
  cmd_sim->add_option("--p", sim_opts.p)->capture_default_str();
  cmd_sim->add_option("--effect", sim_opts.effect, "constant, step, or linear")
      ->check(CLI::IsMember({"constant", "step", "linear"}))
      ->capture_default_str();
  cmd_sim->add_option("--effect-a", sim_opts.effect_a)->capture_default_str();
  cmd_sim->add_option("--effect-b", sim_opts.effect_b)->capture_default_str();
  cmd_sim->add_option("--baseline-rate", sim_opts.baseline_rate)->capture_default_str();
  cmd_sim->add_option("--censoring-rate", sim_opts.censoring_rate)->capture_default_str();
  cmd_sim->add_option("--treat-fraction", sim_opts.treat_fraction)->capture_default_str();
  cmd_sim->add_option("--horizon", sim_opts.horizon)->capture_default_str();
  cmd_sim->add_option("--seed", sim_opts.seed)->capture_default_str();
  cmd_sim->add_option("--out", sim_opts.out, "Data CSV path")->required();
  cmd_sim->add_option("--truth-out", sim_opts.truth_out, "Truth sidecar CSV path");

  std::string f_out = "jtpa.csv", f_url = kJtpaUrl;
  bool f_insecure = false;
  auto* cmd_fetch =
      app.add_subcommand("fetch-jtpa", "Download the JTPA CSV and verify its sha256");
  cmd_fetch->add_option("--out", f_out)->capture_default_str();
  cmd_fetch->add_option("--url", f_url, "Override the source URL (hash still verified)");
  cmd_fetch->add_flag("--insecure", f_insecure, "Skip TLS certificate verification");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_fit) return run_fit(fit_opts, threads);
    if (*cmd_predict) return run_predict(p_model, p_data, p_schema, p_oob, p_out, threads);
    if (*cmd_ate) return run_ate(a_model, a_format);
    if (*cmd_blp) return run_blp(b_model, b_data, b_schema, b_cov, b_format);
    if (*cmd_rate)
      return run_rate(r_model, r_bootstrap, r_seed, r_toc_csv, r_svg, r_format, threads);
    if (*cmd_report)
      return run_report(t_model, t_data, t_schema, t_top, t_hist, t_bins, t_format);
    if (*cmd_sim) return run_simulate_cmd(sim_opts);
    if (*cmd_fetch) return run_fetch_jtpa(f_out, f_url, f_insecure);
  } catch (const IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return kIo;
  } catch (const SchemaError& e) {
    std::cerr << "error (schema): " << e.what() << "\n";
    return kSchema;
  } catch (const ParseError& e) {
    std::cerr << "error (parse): " << e.what() << "\n";
    return kParse;
  } catch (const ParamError& e) {
    std::cerr << "error (parameter): " << e.what() << "\n";
    return kParam;
  } catch (const SelectionError& e) {
    std::cerr << "error (selection): " << e.what() << "\n";
    return kSelection;
  } catch (const LinAlgError& e) {
    std::cerr << "error (linear algebra): " << e.what() << "\n";
    return kLinAlg;
  } catch (const FingerprintError& e) {
    std::cerr << "error (fingerprint): " << e.what() << "\n";
    return kFingerprint;
  } catch (const PredictionError& e) {
    std::cerr << "error (prediction): " << e.what() << "\n";
    return kPrediction;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUsage;
}
