#include "config.hpp"

#include <fstream>
#include <initializer_list>

namespace wpcm::cli {

namespace {

using nlohmann::json;

void allow_keys(const json& j, const char* where,
                std::initializer_list<const char*> keys) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_spline(const json& j, SplineBasisSpec& spec) {
  allow_keys(j, "spline", {"interior_knots", "lower", "upper", "order"});
  read(j, "interior_knots", spec.interior_knots);
  read(j, "lower", spec.lower);
  read(j, "upper", spec.upper);
  read(j, "order", spec.order);
}

void read_hyper(const json& j, HyperParams& h) {
  allow_keys(j, "hyper", {"a0", "b0", "maxiter", "nr_tol", "nr_max_iter"});
  read(j, "a0", h.a0);
  read(j, "b0", h.b0);
  read(j, "maxiter", h.maxiter);
  read(j, "nr_tol", h.nr_tol);
  read(j, "nr_max_iter", h.nr_max_iter);
}

void read_outliers(const json& j, RunConfig& cfg) {
  allow_keys(j, "outliers",
             {"enabled", "tail", "first_bin", "bin_width", "bin_count", "quantile"});
  read(j, "enabled", cfg.remove_outliers);
  std::string tail = "lower";
  read(j, "tail", tail);
  if (tail == "lower") {
    cfg.outliers.tail = OutlierTail::lower;
  } else if (tail == "upper") {
    cfg.outliers.tail = OutlierTail::upper;
  } else {
    throw ConfigError("outliers.tail must be 'lower' or 'upper'");
  }
  read(j, "first_bin", cfg.outliers.first_bin);
  read(j, "bin_width", cfg.outliers.bin_width);
  read(j, "bin_count", cfg.outliers.bin_count);
  read(j, "quantile", cfg.outliers.quantile);
}

void read_calibration(const json& j, CalibrationSettings& c) {
  allow_keys(j, "calibration",
             {"arl", "alpha", "replications", "segments", "noise_sd", "baselines",
              "threads"});
  if (j.contains("arl") && j.contains("alpha")) {
    throw ConfigError("calibration takes either 'arl' or 'alpha', not both");
  }
  if (j.contains("arl")) {
    double arl = 0.0;
    read(j, "arl", arl);
    if (!(arl > 1.0)) throw ConfigError("calibration.arl must exceed 1");
    c.alpha = CalibrationTarget::average_run_length(arl).alpha;
  }
  read(j, "alpha", c.alpha);
  read(j, "replications", c.replications);
  read(j, "segments", c.segments);
  if (j.contains("noise_sd") && !j.at("noise_sd").is_null()) {
    double sd = 0.0;
    read(j, "noise_sd", sd);
    c.noise_sd = sd;
  }
  read(j, "baselines", c.baselines);
  read(j, "threads", c.threads);
}

void read_baselines(const json& j, BaselineOptions& b) {
  allow_keys(j, "baselines",
             {"llr_bandwidth", "gpr_max_points", "wcdf_cut_in", "wcdf_rated", "gpr_edges"});
  read(j, "llr_bandwidth", b.llr_bandwidth);
  read(j, "gpr_max_points", b.gpr_max_points);
  read(j, "wcdf_cut_in", b.wcdf.cut_in);
  read(j, "wcdf_rated", b.wcdf.rated);
  read(j, "gpr_edges", b.gpr_edges);
}

void read_scenario(const json& j, RunConfig& cfg) {
  allow_keys(j, "scenario",
             {"blocks", "tau", "relative_drop", "noise_sd", "full_range_blocks", "wind",
              "curve", "monitor_segments", "change_segment"});
  auto& sc = cfg.scenario.scenario;
  read(j, "blocks", cfg.scenario_blocks);
  read(j, "tau", sc.tau);
  read(j, "relative_drop", sc.relative_drop);
  read(j, "noise_sd", sc.noise_sd);
  read(j, "full_range_blocks", sc.full_range_blocks);
  read(j, "monitor_segments", cfg.scenario.monitor_segments);
  read(j, "change_segment", cfg.scenario.change_segment);
  if (j.contains("wind")) {
    const auto& w = j.at("wind");
    allow_keys(w, "scenario.wind",
               {"shape", "scale", "lower", "upper", "incomplete_fraction", "incomplete_upper"});
    read(w, "shape", sc.wind.shape);
    read(w, "scale", sc.wind.scale);
    read(w, "lower", sc.wind.lower);
    read(w, "upper", sc.wind.upper);
    read(w, "incomplete_fraction", sc.wind.incomplete_fraction);
    read(w, "incomplete_upper", sc.wind.incomplete_upper);
  }
  if (j.contains("curve")) {
    const auto& c = j.at("curve");
    allow_keys(c, "scenario.curve", {"scale", "shape", "cut_in", "rated"});
    read(c, "scale", sc.curve.scale);
    read(c, "shape", sc.curve.shape);
    read(c, "cut_in", sc.curve.cut_in);
    read(c, "rated", sc.curve.rated);
  }
}

}  // namespace

void RunConfig::validate() const {
  monitor.validate();
  if (outliers.bin_count <= 0 || !(outliers.bin_width > 0.0)) {
    throw ConfigError("invalid outlier binning");
  }
  if (rated_power_kw && !(*rated_power_kw > 0.0)) {
    throw ConfigError("rated_power_kw must be positive");
  }
  if (!(calibration.alpha >= 0.0 && calibration.alpha < 1.0)) {
    throw ConfigError("calibration.alpha must lie in [0, 1)");
  }
  if (calibration.segments == 0) throw ConfigError("calibration.segments must be positive");
  if (calibration.threads < 1) throw ConfigError("calibration.threads must be >= 1");
  if (calibration.noise_sd && !(*calibration.noise_sd >= 0.0)) {
    throw ConfigError("calibration.noise_sd must be nonnegative");
  }
  if (!(baseline.llr_bandwidth > 0.0)) throw ConfigError("llr_bandwidth must be positive");
  if (scenario_blocks == 0) throw ConfigError("scenario.blocks must be positive");
  scenario.scenario.validate();
}

RunConfig config_from_json(const json& j) {
  allow_keys(j, "config",
             {"seed", "input", "rated_power_kw", "spline", "hyper", "window", "outliers",
              "init", "reference", "hypothesis", "calibration", "baselines", "scenario",
              "plots"});
  RunConfig cfg;
  // simulate: 24 clean blocks, then a 10% efficiency loss
  cfg.scenario.scenario.tau = 24;
  cfg.scenario.scenario.relative_drop = 0.1;
  read(j, "seed", cfg.seed);
  if (j.contains("input")) {
    const auto& in = j.at("input");
    if (in.is_string()) {
      cfg.inputs = {in.get<std::string>()};
    } else {
      read(j, "input", cfg.inputs);
    }
  }
  if (j.contains("rated_power_kw") && !j.at("rated_power_kw").is_null()) {
    double kw = 0.0;
    read(j, "rated_power_kw", kw);
    cfg.rated_power_kw = kw;
  }
  auto& m = cfg.monitor;
  if (j.contains("spline")) read_spline(j.at("spline"), m.spec);
  if (j.contains("hyper")) read_hyper(j.at("hyper"), m.hyper);
  if (j.contains("window")) {
    const auto& w = j.at("window");
    allow_keys(w, "window", {"n_w", "n_u"});
    read(w, "n_w", m.window.n_w);
    read(w, "n_u", m.window.n_u);
  }
  if (j.contains("outliers")) read_outliers(j.at("outliers"), cfg);
  if (j.contains("init")) {
    const auto& i = j.at("init");
    allow_keys(i, "init", {"records", "max_epochs", "residual_tol", "min_per_interval"});
    read(i, "records", m.init_records);
    read(i, "max_epochs", m.init_max_epochs);
    read(i, "residual_tol", m.init_residual_tol);
    read(i, "min_per_interval", cfg.min_per_interval);
  }
  if (j.contains("reference")) {
    const auto& r = j.at("reference");
    allow_keys(r, "reference", {"warmup_segments"});
    read(r, "warmup_segments", m.reference_warmup);
  }
  if (j.contains("hypothesis")) {
    const auto& h = j.at("hypothesis");
    allow_keys(h, "hypothesis", {"shift_fraction", "h"});
    read(h, "shift_fraction", m.shift_fraction);
    read(h, "h", m.h);
  }
  if (j.contains("calibration")) read_calibration(j.at("calibration"), cfg.calibration);
  if (j.contains("baselines")) read_baselines(j.at("baselines"), cfg.baseline);
  if (j.contains("scenario")) read_scenario(j.at("scenario"), cfg);
  if (j.contains("plots")) {
    const auto& p = j.at("plots");
    allow_keys(p, "plots", {"curve_segments"});
    read(p, "curve_segments", cfg.curve_segments);
  }
  cfg.scenario.monitor = cfg.monitor;
  cfg.scenario.baseline = cfg.baseline;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace wpcm::cli
