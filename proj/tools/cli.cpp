#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "wpcm/metrics.hpp"
#include "wpcm/parallel.hpp"
#include "wpcm/posterior_io.hpp"
#include "wpcm/rng.hpp"
#include "wpcm/svg.hpp"

namespace wpcm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

struct Paths {
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string hypothesis;
  std::string calibration;
  std::string report;
  std::string labels;
  std::string chart;
};

RunConfig resolve(const Common& common, const Paths& paths) {
  RunConfig cfg = common.config.empty() ? config_from_json(json::object())
                                        : load_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  if (!paths.inputs.empty()) cfg.inputs = paths.inputs;
  return cfg;
}

fs::path out_dir(const Common& common) {
  fs::path dir(common.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path + " is not valid JSON: " + e.what());
  }
}

json number_or_inf(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

// Parsed, normalized and clipped records of all inputs, in time order.
std::vector<ScadaRecord> load_records(const RunConfig& cfg, std::ostream& err,
                                      std::size_t* skipped = nullptr,
                                      std::size_t* clipped = nullptr) {
  if (cfg.inputs.empty()) throw ConfigError("no input file given (--input or config 'input')");
  std::vector<ScadaRecord> all;
  std::size_t skip = 0;
  for (const auto& path : cfg.inputs) {
    std::istringstream in(read_text(path));
    ParsedScada parsed;
    try {
      parsed = parse_scada(in);
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
    skip += parsed.skipped;
    if (!parsed.normalized) {
      if (!cfg.rated_power_kw) {
        throw ConfigError(path + " holds power_kw; set rated_power_kw in the config");
      }
      parsed.records = normalize_power(std::move(parsed.records), *cfg.rated_power_kw);
    }
    all.insert(all.end(), parsed.records.begin(), parsed.records.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const ScadaRecord& a, const ScadaRecord& b) {
    return a.epoch_seconds < b.epoch_seconds;
  });
  std::size_t dropped = 0;
  all = clip_to_range(all, cfg.monitor.spec.lower, cfg.monitor.spec.upper, &dropped);
  if (skip > 0) err << "warning: skipped " << skip << " malformed rows\n";
  if (skipped) *skipped = skip;
  if (clipped) *clipped = dropped;
  return all;
}

PosteriorState load_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  return posterior_from_json(read_json(path));
}

MonitorState reference_from_history(const RunConfig& cfg, const PosteriorState& start,
                                    const std::vector<double>& speed,
                                    const std::vector<double>& power, bool with_baselines) {
  const auto needed = cfg.scenario.history_records();
  if (speed.size() < needed) {
    std::ostringstream msg;
    msg << "need " << needed << " history records (starting fit plus warm-up), got "
        << speed.size();
    throw DataError(msg.str());
  }
  return establish_reference(start, speed, power, cfg.monitor, with_baselines, cfg.baseline);
}

void plot(const fs::path& path, SvgPlot p) { write_text(path, render_svg(p)); }

SvgPlot titled(std::string title, std::string x_label, std::string y_label) {
  SvgPlot p;
  p.title = std::move(title);
  p.x_label = std::move(x_label);
  p.y_label = std::move(y_label);
  return p;
}

std::vector<double> grid_over(const SplineBasisSpec& spec, int n = 251) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = spec.lower + (spec.upper - spec.lower) * i / (n - 1);
  return g;
}

SvgSeries curve_series(const PosteriorState& s, const RunConfig& cfg, const std::string& color,
                       const std::string& label) {
  const auto g = grid_over(cfg.monitor.spec);
  const auto pred = predict_power(s, g, cfg.monitor.spec, cfg.monitor.hyper);
  SvgSeries out;
  out.x = g;
  out.y.assign(pred.mean.data(), pred.mean.data() + pred.mean.size());
  out.color = color;
  out.label = label;
  return out;
}

// ---- ingest ----

int cmd_ingest(const RunConfig& cfg, const Common& common, std::ostream& out,
               std::ostream& err) {
  std::size_t skipped = 0, clipped = 0;
  const auto records = load_records(cfg, err, &skipped, &clipped);
  OutlierResult result;
  if (cfg.remove_outliers) {
    result = remove_outliers(records, cfg.outliers);
  } else {
    result.kept = records;
  }
  const auto dir = out_dir(common);
  std::ostringstream cleaned, audit;
  write_scada_csv(cleaned, result.kept);
  write_outlier_audit(audit, result.removed);
  write_text(dir / "cleaned.csv", cleaned.str());
  write_text(dir / "outliers.csv", audit.str());
  json summary{{"records_parsed", records.size() + clipped},
               {"rows_skipped", skipped},
               {"records_clipped", clipped},
               {"outliers_removed", result.removed.size()},
               {"records_kept", result.kept.size()}};
  write_json_file(dir / "ingest.json", summary);
  if (result.kept.empty()) err << "warning: no records in the input\n";
  out << "kept " << result.kept.size() << " records, removed " << result.removed.size()
      << " outliers\n";
  return kSuccess;
}

// ---- fit-init ----

int cmd_fit_init(const RunConfig& cfg, const Common& common, std::ostream& out,
                 std::ostream& err) {
  const auto records = load_records(cfg, err);
  const auto n = cfg.monitor.init_records;
  if (records.size() < n) {
    std::ostringstream msg;
    msg << "starting fit needs " << n << " records, input has " << records.size();
    throw DataError(msg.str());
  }
  const auto speed = speeds_of(records);
  const auto power = powers_of(records);
  const std::vector<double> first(speed.begin(), speed.begin() + n);
  const auto gaps = coverage_gaps(first, cfg.monitor.spec, cfg.min_per_interval);
  if (!gaps.empty()) {
    std::ostringstream msg;
    msg << "insufficient wind-speed coverage in the starting records (need "
        << cfg.min_per_interval << " per interval):";
    for (const auto& g : gaps) {
      msg << " [" << g.lo << ", " << g.hi << ") has " << g.count << ';';
    }
    throw DataError(msg.str());
  }
  const auto fit = fit_starting_posterior(speed, power, cfg.monitor);
  bool fallback = false;
  const auto hyp = HypothesisConfig::from_reference(fit.state, cfg.monitor.shift_fraction,
                                                    cfg.monitor.h, &fallback);
  const auto pred = predict_power(fit.state, first, cfg.monitor.spec, cfg.monitor.hyper);
  const std::vector<double> fitted(pred.mean.data(), pred.mean.data() + pred.mean.size());
  const auto score = fit_score(fitted, std::span(power).first(n));

  const auto dir = out_dir(common);
  write_json_file(dir / "checkpoint.json", posterior_to_json(fit.state));
  write_json_file(dir / "hypothesis.json", hypothesis_to_json(hyp));
  write_json_file(dir / "fit_init.json", {{"records", n},
                                          {"epochs", fit.epochs},
                                          {"converged", fit.converged},
                                          {"max_residual", fit.max_residual},
                                          {"shift_fallback", fallback},
                                          {"rmse", score.rmse},
                                          {"mae", score.mae},
                                          {"mape", score.mape}});
  auto p = titled("Starting power curve", "wind speed (m/s)", "normalized power");
  p.series.push_back({first, std::vector<double>(power.begin(), power.begin() + n), "#999999",
                      true, "records"});
  p.series.push_back(curve_series(fit.state, cfg, "#d62728", "posterior mean"));
  plot(dir / "curve.svg", p);
  if (!fit.converged) err << "warning: starting fit stopped at the epoch limit\n";
  out << "starting fit: " << fit.epochs << " epochs, rmse " << score.rmse << '\n';
  return kSuccess;
}

// ---- monitor ----

json segment_entry(const std::vector<ScadaRecord>& records, std::size_t first,
                   std::size_t n_w, std::size_t t) {
  return {{"t", t},
          {"first_record", first},
          {"start", records[first].timestamp},
          {"end", records[first + n_w - 1].timestamp}};
}

int cmd_monitor(const RunConfig& cfg, const Common& common, const Paths& paths,
                std::ostream& out, std::ostream& err) {
  const auto records = load_records(cfg, err);
  const auto start = load_checkpoint(paths.checkpoint);
  const auto speed = speeds_of(records);
  const auto power = powers_of(records);
  auto state = reference_from_history(cfg, start, speed, power, false);
  if (!paths.hypothesis.empty()) {
    state.hypothesis = hypothesis_from_json(read_json(paths.hypothesis));
    if (state.hypothesis.dim() != start.dim()) {
      throw ConfigError("hypothesis dimension does not match the checkpoint");
    }
  }
  const auto history = cfg.scenario.history_records();
  const std::span<const double> fresh_v(speed.data() + history, speed.size() - history);
  const std::span<const double> fresh_p(power.data() + history, power.size() - history);
  const auto stats = monitor_stream(state, fresh_v, fresh_p, cfg.monitor, false);
  const double h = state.hypothesis.h;
  const auto& w = cfg.monitor.window;
  const std::size_t offset = history - (w.n_w - w.n_u);

  std::vector<DetectionRecord> det;
  json segs = json::array();
  std::optional<std::size_t> first_alarm;
  std::size_t alarms = 0;
  for (std::size_t k = 0; k < stats.cvi.size(); ++k) {
    const bool alarm = stats.cvi[k] > h;
    det.push_back({static_cast<int>(k), stats.cvi[k], alarm});
    auto e = segment_entry(records, offset + k * w.n_u, w.n_w, k);
    e["lambda"] = number_or_inf(stats.cvi[k]);
    e["alarms"] = {{"cvi", alarm}};
    segs.push_back(e);
    if (alarm) {
      ++alarms;
      if (!first_alarm) first_alarm = k;
    }
  }
  const auto dir = out_dir(common);
  json report{{"schema", "wpcm.monitor/1"},
              {"h", h},
              {"window", {{"n_w", w.n_w}, {"n_u", w.n_u}}},
              {"history_records", history},
              {"reference_warmup", cfg.monitor.reference_warmup},
              {"shift_fallback", state.shift_fallback},
              {"segment_failures", stats.segment_failures},
              {"alarm_count", alarms},
              {"first_alarm", first_alarm ? json(*first_alarm) : json(nullptr)},
              {"segments", segs}};
  write_json_file(dir / "report.json", report);
  write_text(dir / "detection.csv", detection_to_csv(det));

  auto lam = titled("Detection statistic", "segment", "statistic");
  SvgSeries s;
  for (std::size_t k = 0; k < stats.cvi.size(); ++k) {
    s.x.push_back(static_cast<double>(k));
    s.y.push_back(stats.cvi[k]);
  }
  s.label = "statistic";
  lam.series.push_back(s);
  lam.hlines.push_back(h);
  plot(dir / "lambda.svg", lam);

  auto curves = titled("Fitted power curves", "wind speed (m/s)", "normalized power");
  curves.series.push_back(curve_series(state.reference, cfg, "#000000", "reference"));
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
  std::size_t c = 0;
  for (long sel : cfg.curve_segments) {
    const long n = static_cast<long>(stats.trajectory.size());
    const long k = sel < 0 ? n + sel : sel;
    if (k < 0 || k >= n) continue;
    curves.series.push_back(curve_series(stats.trajectory[k], cfg, colors[c++ % 5],
                                         "segment " + std::to_string(k)));
  }
  plot(dir / "curves.svg", curves);
  out << stats.cvi.size() << " segments, " << alarms << " alarms";
  if (first_alarm) out << ", first at segment " << *first_alarm;
  out << '\n';
  return kSuccess;
}

// ---- calibrate ----

struct Pools {
  std::vector<std::vector<double>> cvi, lwz, gpr, llr;
};

json calibration_entry(const CalibrationResult& r) {
  return {{"h", r.h},
          {"target_alpha", r.target_alpha},
          {"achieved_alpha", r.achieved_alpha},
          {"achieved_arl", number_or_inf(r.achieved_arl)},
          {"std_error", r.std_error},
          {"statistics", r.n_statistics},
          {"lambda_min", number_or_inf(r.lambda_min)},
          {"lambda_max", number_or_inf(r.lambda_max)}};
}

int cmd_calibrate(const RunConfig& cfg, const Common& common, const Paths& paths,
                  std::ostream& out, std::ostream& err) {
  const auto& cal = cfg.calibration;
  if (cal.replications < kMinCalibrationReplications) {
    throw ConfigError("calibration needs at least 500 replications");
  }
  const bool with_baselines = cal.baselines;
  const int n = cal.replications;
  Pools pools;
  pools.cvi.resize(n);
  if (with_baselines) {
    pools.lwz.resize(n);
    pools.gpr.resize(n);
    pools.llr.resize(n);
  }
  auto store = [&](int r, const ChartStatistics& s) {
    pools.cvi[r] = s.cvi;
    if (with_baselines) {
      pools.lwz[r] = for_pooling(s.lwz);
      pools.gpr[r] = s.gpr;
      pools.llr[r] = s.llr;
    }
  };

  MonitorState state;
  json mode;
  if (!cfg.inputs.empty()) {
    const auto records = load_records(cfg, err);
    const auto start = load_checkpoint(paths.checkpoint);
    const auto speed = speeds_of(records);
    const auto power = powers_of(records);
    state = reference_from_history(cfg, start, speed, power, with_baselines);
    const auto history = cfg.scenario.history_records();
    const std::vector<double> pool(speed.begin(), speed.begin() + history);
    double noise = 0.0;
    if (cal.noise_sd) {
      noise = *cal.noise_sd;
    } else {
      const auto pred = predict_power(state.reference, pool, cfg.monitor.spec, cfg.monitor.hyper);
      double ss = 0.0;
      for (std::size_t i = 0; i < history; ++i) {
        const double e = power[i] - pred.mean(static_cast<Eigen::Index>(i));
        ss += e * e;
      }
      noise = std::sqrt(ss / static_cast<double>(history));
    }
    const std::size_t n_records = cal.segments * cfg.monitor.window.n_u;
    parallel_for(n, cal.threads, [&](int r) {
      std::vector<double> v, p;
      bootstrap_in_control(state, cfg.monitor, pool, noise, n_records,
                           stream_seed(cfg.seed, static_cast<std::uint64_t>(r)), v, p);
      store(r, monitor_stream(state, v, p, cfg.monitor, with_baselines));
    });
    mode = {{"mode", "bootstrap"}, {"noise_sd", noise}};
  } else {
    ScenarioConfig sc = cfg.scenario;
    sc.with_baselines = with_baselines;
    sc.change_segment = cal.segments;
    sc.monitor_segments = std::max(sc.monitor_segments, cal.segments);
    const auto hist = synthetic_history(sc, cfg.seed);
    state = hist.state;
    parallel_for(n, cal.threads, [&](int r) {
      store(r, synthetic_run(sc, state, stream_seed(cfg.seed + 1, static_cast<std::uint64_t>(r)),
                             true)
                   .stats);
    });
    mode = {{"mode", "synthetic"}};
  }

  const CalibrationTarget target{cal.alpha};
  const auto cvi = threshold_from_pool(pools.cvi, target);
  json charts{{"cvi", calibration_entry(cvi)}};
  if (with_baselines) {
    charts["lwz"] = calibration_entry(threshold_from_pool(pools.lwz, target));
    charts["gpr"] = calibration_entry(threshold_from_pool(pools.gpr, target));
    charts["llr"] = calibration_entry(threshold_from_pool(pools.llr, target));
  }
  auto hyp = state.hypothesis;
  hyp.h = cvi.h;
  const auto dir = out_dir(common);
  mode["replications"] = n;
  mode["segments_per_replication"] = cal.segments;
  mode["seed"] = cfg.seed;
  mode["charts"] = charts;
  write_json_file(dir / "calibration.json", mode);
  write_json_file(dir / "hypothesis.json", hypothesis_to_json(hyp));
  out << "h = " << cvi.h << " (achieved alpha " << cvi.achieved_alpha << ", MC SE "
      << cvi.std_error << ")\n";
  return kSuccess;
}

// ---- baselines ----

int cmd_baselines(const RunConfig& cfg, const Common& common, const Paths& paths,
                  std::ostream& out, std::ostream& err) {
  const auto records = load_records(cfg, err);
  const auto start = load_checkpoint(paths.checkpoint);
  const auto speed = speeds_of(records);
  const auto power = powers_of(records);
  const auto state = reference_from_history(cfg, start, speed, power, true);
  const auto history = cfg.scenario.history_records();
  const std::span<const double> fresh_v(speed.data() + history, speed.size() - history);
  const std::span<const double> fresh_p(power.data() + history, power.size() - history);
  const auto stats = monitor_stream(state, fresh_v, fresh_p, cfg.monitor, true);

  // Limits: calibrated values when supplied; otherwise the chi-square limit
  // for the two-parameter Hotelling chart only.
  std::map<std::string, std::optional<double>> limits{
      {"lwz", -2.0 * std::log(cfg.calibration.alpha)}, {"gpr", {}}, {"llr", {}}};
  if (!paths.calibration.empty()) {
    const auto c = read_json(paths.calibration);
    for (auto& [name, h] : limits) {
      if (c.contains("charts") && c["charts"].contains(name)) {
        h = c["charts"][name].at("h").get<double>();
      } else {
        h.reset();
      }
    }
  }
  const auto& w = cfg.monitor.window;
  const std::size_t offset = history - (w.n_w - w.n_u);
  const std::map<std::string, const std::vector<double>*> series{
      {"lwz", &stats.lwz}, {"gpr", &stats.gpr}, {"llr", &stats.llr}};

  json segs = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "t,gpr,llr,lwz,gpr_alarm,llr_alarm,lwz_alarm\n";
  std::map<std::string, std::size_t> counts;
  for (std::size_t k = 0; k < stats.cvi.size(); ++k) {
    auto e = segment_entry(records, offset + k * w.n_u, w.n_w, k);
    json alarms = json::object();
    csv << k;
    for (const auto& [name, v] : series) {
      e[name] = number_or_inf((*v)[k]);
      csv << ',' << (*v)[k];
    }
    for (const auto& [name, v] : series) {
      const auto& h = limits[name];
      if (h) {
        const bool a = (*v)[k] > *h;
        alarms[name] = a;
        counts[name] += a;
        csv << ',' << (a ? 1 : 0);
      } else {
        csv << ',';
      }
    }
    csv << '\n';
    e["alarms"] = alarms;
    segs.push_back(e);
  }
  json lim = json::object();
  for (const auto& [name, h] : limits) lim[name] = h ? json(*h) : json(nullptr);
  const auto dir = out_dir(common);
  write_json_file(dir / "baselines.json",
                  {{"schema", "wpcm.baselines/1"},
                   {"limits", lim},
                   {"alarm_counts", counts},
                   {"phase1_lwz_fit_failures", state.baselines.lwz_fit_failures},
                   {"lwz_fit_failures", stats.lwz_failures},
                   {"gpr_hyper",
                    {{"length", state.baselines.gpr_hyper.length},
                     {"amplitude", state.baselines.gpr_hyper.amplitude},
                     {"noise_var", state.baselines.gpr_hyper.noise_var}}},
                   {"llr_sigma0_sq", state.baselines.llr.sigma0_sq},
                   {"segments", segs}});
  write_text(dir / "baselines.csv", csv.str());
  for (const auto& [name, v] : series) {
    auto p = titled(name + " chart", "segment", "statistic");
    SvgSeries s;
    for (std::size_t k = 0; k < v->size(); ++k) {
      s.x.push_back(static_cast<double>(k));
      s.y.push_back((*v)[k]);
    }
    p.series.push_back(s);
    if (limits[name]) p.hlines.push_back(*limits[name]);
    plot(dir / ("baseline_" + name + ".svg"), p);
  }
  out << stats.cvi.size() << " segments";
  for (const auto& [name, c] : counts) out << ", " << name << " " << c << " alarms";
  out << '\n';
  return kSuccess;
}

// ---- simulate ----

int cmd_simulate(const RunConfig& cfg, const Common& common, std::ostream& out) {
  const auto& w = cfg.monitor.window;
  const auto data = generate_scada(cfg.scenario.scenario, cfg.scenario_blocks, w.n_u, cfg.seed);
  const auto dir = out_dir(common);
  std::ostringstream scada, labels;
  write_scada_csv(scada, data.records);
  write_labels_csv(labels, data, w.n_u);
  write_text(dir / "scada.csv", scada.str());
  write_text(dir / "labels.csv", labels.str());
  const auto& sc = cfg.scenario.scenario;
  write_json_file(dir / "simulate.json", {{"seed", cfg.seed},
                                          {"blocks", cfg.scenario_blocks},
                                          {"block_size", w.n_u},
                                          {"tau", sc.tau},
                                          {"relative_drop", sc.relative_drop},
                                          {"noise_sd", sc.noise_sd},
                                          {"records", data.records.size()}});
  out << "wrote " << data.records.size() << " records\n";
  return kSuccess;
}

// ---- evaluate ----

std::vector<std::pair<std::int64_t, bool>> read_labels(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) head.push_back(cell);
  }
  const auto ts = std::find(head.begin(), head.end(), "timestamp") - head.begin();
  const auto pc = std::find(head.begin(), head.end(), "post_change") - head.begin();
  if (ts == static_cast<long>(head.size()) || pc == static_cast<long>(head.size())) {
    throw FormatError(path + ": labels need 'timestamp' and 'post_change' columns");
  }
  std::vector<std::pair<std::int64_t, bool>> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    std::int64_t t = 0;
    if (cells.size() <= static_cast<std::size_t>(std::max(ts, pc)) ||
        !parse_iso8601(cells[ts], t) || (cells[pc] != "0" && cells[pc] != "1")) {
      throw FormatError(path + ": malformed label row '" + line + "'");
    }
    out.emplace_back(t, cells[pc] == "1");
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

int cmd_evaluate(const Paths& paths, const Common& common, std::ostream& out) {
  if (paths.report.empty() || paths.labels.empty()) {
    throw ConfigError("evaluate needs --report and --labels");
  }
  const auto report = read_json(paths.report);
  const auto labels = read_labels(paths.labels);
  if (!report.contains("segments") || !report["segments"].is_array()) {
    throw FormatError(paths.report + ": missing 'segments' array");
  }
  std::string chart = paths.chart;
  std::vector<bool> alarms, truth;
  for (const auto& seg : report["segments"]) {
    const auto& a = seg.at("alarms");
    if (chart.empty()) {
      if (a.size() != 1) throw ConfigError("report holds several charts; pass --chart");
      chart = a.begin().key();
    }
    if (!a.contains(chart)) {
      throw ConfigError("chart '" + chart + "' has no alarms in the report");
    }
    alarms.push_back(a.at(chart).get<bool>());
    std::int64_t t0 = 0, t1 = 0;
    if (!parse_iso8601(seg.at("start").get<std::string>(), t0) ||
        !parse_iso8601(seg.at("end").get<std::string>(), t1)) {
      throw FormatError(paths.report + ": bad segment timestamps");
    }
    const auto lo = std::lower_bound(labels.begin(), labels.end(), std::pair{t0, false});
    const auto hi = std::upper_bound(labels.begin(), labels.end(), std::pair{t1, true});
    std::size_t n = 0, post = 0;
    for (auto it = lo; it != hi; ++it) {
      ++n;
      post += it->second;
    }
    if (n == 0) throw DataError("no labels cover segment " + seg.at("t").dump());
    truth.push_back(2 * post >= n);
  }
  const auto score = detection_score(alarms, truth);
  const int delay = first_alarm_delay(alarms, truth);
  const auto dir = out_dir(common);
  write_json_file(dir / "evaluation.json",
                  {{"chart", chart},
                   {"segments", alarms.size()},
                   {"precision", score.precision},
                   {"recall", score.recall},
                   {"f1", score.f1},
                   {"tp", score.tp},
                   {"fp", score.fp},
                   {"fn", score.fn},
                   {"tn", score.tn},
                   {"precision_undefined", score.precision_undefined},
                   {"recall_undefined", score.recall_undefined},
                   {"first_alarm_delay", delay >= 0 ? json(delay) : json(nullptr)}});
  out << chart << ": precision " << score.precision << ", recall " << score.recall << ", F1 "
      << score.f1 << '\n';
  return kSuccess;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "JSON configuration file");
  cmd->add_option("--seed", common.seed, "random seed (overrides the config)");
  cmd->add_option("--out", common.out, "output directory")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wind turbine power-curve monitoring"};
  app.name(args.empty() ? "wpcm" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  Common common;
  Paths paths;

  auto* ingest = app.add_subcommand("ingest", "clean raw SCADA CSV files");
  auto* fit = app.add_subcommand("fit-init", "fit the starting posterior");
  auto* monitor = app.add_subcommand("monitor", "sequential updating and detection");
  auto* calibrate = app.add_subcommand("calibrate", "Monte Carlo alarm threshold");
  auto* baselines = app.add_subcommand("baselines", "LWZ, GPR and LLR control charts");
  auto* simulate = app.add_subcommand("simulate", "synthetic SCADA with a known change");
  auto* evaluate = app.add_subcommand("evaluate", "score a report against labels");
  for (auto* c : {ingest, fit, monitor, calibrate, baselines, simulate, evaluate}) {
    add_common(c, common);
  }
  for (auto* c : {ingest, fit, monitor, calibrate, baselines}) {
    c->add_option("--input", paths.inputs, "SCADA CSV file(s)");
  }
  for (auto* c : {monitor, calibrate, baselines}) {
    c->add_option("--checkpoint", paths.checkpoint, "starting posterior (fit-init output)");
  }
  monitor->add_option("--hypothesis", paths.hypothesis, "hypothesis file with the threshold");
  baselines->add_option("--calibration", paths.calibration, "calibrate output with limits");
  evaluate->add_option("--report", paths.report, "monitor or baselines report");
  evaluate->add_option("--labels", paths.labels, "labels CSV from simulate");
  evaluate->add_option("--chart", paths.chart, "chart to score (cvi, lwz, gpr, llr)");

  std::vector<std::string> rev;
  if (args.size() > 1) rev.assign(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    const auto cfg = resolve(common, paths);
    if (ingest->parsed()) return cmd_ingest(cfg, common, out, err);
    if (fit->parsed()) return cmd_fit_init(cfg, common, out, err);
    if (monitor->parsed()) return cmd_monitor(cfg, common, paths, out, err);
    if (calibrate->parsed()) return cmd_calibrate(cfg, common, paths, out, err);
    if (baselines->parsed()) return cmd_baselines(cfg, common, paths, out, err);
    if (simulate->parsed()) return cmd_simulate(cfg, common, out);
    if (evaluate->parsed()) return cmd_evaluate(paths, common, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace wpcm::cli
