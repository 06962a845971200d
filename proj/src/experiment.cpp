#include "wpcm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "wpcm/rng.hpp"

namespace wpcm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> default_gpr_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 24; ++i) e.push_back(3.0 + 0.5 * i);
  return e;
}

std::vector<double> default_llr_grid(const SplineBasisSpec& spec) {
  std::vector<double> g;
  const int n = static_cast<int>(std::round((spec.upper - spec.lower) / 0.25));
  for (int i = 0; i <= n; ++i) g.push_back(spec.lower + 0.25 * i);
  return g;
}

std::vector<double> concat(const std::vector<double>& a,
                           std::span<const double> b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void MonitorOptions::validate() const {
  spec.validate();
  hyper.validate();
  window.validate();
  if (init_records == 0) throw ConfigError("init_records must be positive");
  if (init_max_epochs < 1) throw ConfigError("init_max_epochs must be >= 1");
  if (!(init_residual_tol > 0.0)) {
    throw ConfigError("init_residual_tol must be positive");
  }
  if (!(shift_fraction > 0.0)) {
    throw ConfigError("shift_fraction must be positive");
  }
  if (!(h > 0.0)) throw ConfigError("h must be positive");
}

ConvergedFit fit_starting_posterior(std::span<const double> speed,
                                    std::span<const double> power,
                                    const MonitorOptions& options) {
  options.validate();
  if (speed.size() != power.size()) {
    throw DataError("speed and power lengths differ");
  }
  if (speed.size() < options.init_records) {
    throw DataError("fewer records than init_records");
  }
  const auto n = options.init_records;
  return fit_to_convergence(PosteriorState::diffuse(options.spec.dimension()),
                            speed.first(n), power.first(n), options.hyper,
                            options.spec, options.init_max_epochs,
                            options.init_residual_tol);
}

BaselineReferences build_baseline_references(const SegmentStream& in_control,
                                              const PosteriorState& reference,
                                              const MonitorOptions& monitor,
                                              const BaselineOptions& options) {
  if (in_control.size() < 3) {
    throw DataError("baseline references need at least 3 in-control segments");
  }
  BaselineReferences refs;
  refs.options = options;
  if (refs.options.gpr_edges.empty()) refs.options.gpr_edges = default_gpr_edges();
  if (refs.options.llr_grid.empty()) {
    refs.options.llr_grid = default_llr_grid(monitor.spec);
  }

  std::vector<WcdfParams> fits;
  for (const auto& s : in_control) {
    try {
      fits.push_back(fit_wcdf(s.speed, s.power, options.wcdf));
    } catch (const FitError&) {
      ++refs.lwz_fit_failures;
    }
  }
  if (fits.size() < 3) throw FitError("too few in-control curve fits");
  refs.lwz = hotelling_reference(fits);

  refs.gpr_hyper = select_gpr_hyper(in_control.front().speed,
                                    in_control.front().power,
                                    options.gpr_max_points);
  std::vector<GprProfile> profiles;
  for (const auto& s : in_control) profiles.push_back({s.speed, s.power});
  refs.gpr = gpr_reference(profiles, refs.gpr_hyper, refs.options.gpr_edges,
                           options.gpr_max_points);

  refs.llr.grid = refs.options.llr_grid;
  const auto pred = predict_power(reference, refs.llr.grid, monitor.spec,
                                  monitor.hyper);
  refs.llr.g0.assign(pred.mean.data(), pred.mean.data() + pred.mean.size());
  refs.llr.bandwidth = options.llr_bandwidth;
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& s : in_control) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double r = s.power[i] - llr_reference(refs.llr, s.speed[i]);
      ss += r * r;
      ++n;
    }
  }
  refs.llr.sigma0_sq = ss / static_cast<double>(n);
  refs.llr.validate();
  return refs;
}

double lwz_statistic(const Segment& segment, const BaselineReferences& refs) {
  try {
    const auto p = fit_wcdf(segment.speed, segment.power, refs.options.wcdf);
    return hotelling_t2({p}, refs.lwz.mean, refs.lwz.cov).front();
  } catch (const FitError&) {
    return kNaN;
  }
}

MonitorState establish_reference(const PosteriorState& start,
                                 std::span<const double> speed,
                                 std::span<const double> power,
                                 const MonitorOptions& options,
                                 bool with_baselines,
                                 const BaselineOptions& baseline) {
  options.validate();
  const auto& w = options.window;
  const std::size_t n_start = options.init_records;
  const std::size_t needed =
      options.reference_warmup == 0
          ? n_start
          : n_start + (options.reference_warmup - 1) * w.n_u + w.n_w;
  if (speed.size() < needed || power.size() < needed) {
    throw DataError("history too short for the warm-up segments");
  }
  if (n_start < w.n_w - w.n_u) {
    throw DataError("starting records shorter than the window overlap");
  }

  MonitorState state;
  state.start = start;
  state.reference = start;
  SegmentStream phase1;
  if (options.reference_warmup > 0) {
    std::vector<double> sv(speed.begin() + n_start, speed.begin() + needed);
    std::vector<double> pv(power.begin() + n_start, power.begin() + needed);
    phase1 = segment(sv, pv, w);
    phase1.resize(options.reference_warmup);
    auto seq = sequential_update(phase1, start, options.hyper, options.spec);
    const auto start_hyp =
        HypothesisConfig::from_reference(start, options.shift_fraction, options.h);
    state.warmup_detections = detect(seq.trajectory, start_hyp);
    state.reference = seq.trajectory.back();
  } else {
    std::vector<double> sv(speed.begin(), speed.begin() + n_start);
    std::vector<double> pv(power.begin(), power.begin() + n_start);
    phase1 = segment(sv, pv, w);
  }
  state.hypothesis = HypothesisConfig::from_reference(
      state.reference, options.shift_fraction, options.h, &state.shift_fallback);
  const std::size_t overlap = w.n_w - w.n_u;
  state.tail_speed.assign(speed.begin() + (needed - overlap),
                          speed.begin() + needed);
  state.tail_power.assign(power.begin() + (needed - overlap),
                          power.begin() + needed);
  if (with_baselines) {
    state.baselines =
        build_baseline_references(phase1, state.reference, options, baseline);
    state.has_baselines = true;
  }
  return state;
}

ChartStatistics monitor_stream(const MonitorState& state,
                               std::span<const double> speed,
                               std::span<const double> power,
                               const MonitorOptions& options,
                               bool with_baselines) {
  if (with_baselines && !state.has_baselines) {
    throw ConfigError("baseline references were not built");
  }
  const auto segs = segment(concat(state.tail_speed, speed),
                            concat(state.tail_power, power), options.window);
  ChartStatistics out;
  auto seq = sequential_update(segs, state.reference, options.hyper, options.spec);
  out.segment_failures = seq.failures.size();
  out.cvi.reserve(segs.size());
  for (const auto& post : seq.trajectory) {
    out.cvi.push_back(klf_statistic(post, state.hypothesis));
  }
  out.trajectory = std::move(seq.trajectory);
  if (with_baselines) {
    const auto& refs = state.baselines;
    for (const auto& s : segs) {
      const double t2 = lwz_statistic(s, refs);
      if (std::isnan(t2)) ++out.lwz_failures;
      out.lwz.push_back(t2);
      out.gpr.push_back(gpr_t2(refs.gpr, s.speed, s.power));
      out.llr.push_back(llr_glr(s.speed, s.power, refs.llr));
    }
  }
  return out;
}

void ScenarioConfig::validate() const {
  scenario.validate();
  monitor.validate();
  const auto& w = monitor.window;
  if (w.n_w % w.n_u != 0) {
    throw ConfigError("synthetic runs need n_w to be a multiple of n_u");
  }
  if (monitor.init_records % w.n_u != 0) {
    throw ConfigError("synthetic runs need init_records to be a multiple of n_u");
  }
  if (monitor_segments == 0) throw ConfigError("monitor_segments must be positive");
  if (change_segment == 0 || change_segment > monitor_segments) {
    throw ConfigError("change_segment must lie in [1, monitor_segments]");
  }
}

std::size_t ScenarioConfig::history_records() const {
  const auto& m = monitor;
  return m.reference_warmup == 0
             ? m.init_records
             : m.init_records + (m.reference_warmup - 1) * m.window.n_u +
                   m.window.n_w;
}

SyntheticHistory synthetic_history(const ScenarioConfig& config,
                                   std::uint64_t seed) {
  config.validate();
  const auto& w = config.monitor.window;
  DegradationScenario sc = config.scenario;
  sc.tau = std::numeric_limits<std::size_t>::max();
  sc.full_range_blocks = config.monitor.init_records / w.n_u;
  const std::size_t n_blocks = config.history_records() / w.n_u;

  SyntheticHistory out;
  out.data = generate_scada(sc, n_blocks, w.n_u, seed);
  const auto speed = speeds_of(out.data.records);
  const auto power = powers_of(out.data.records);
  const auto fit = fit_starting_posterior(speed, power, config.monitor);
  out.init_epochs = fit.epochs;
  out.init_converged = fit.converged;
  out.state = establish_reference(fit.state, speed, power, config.monitor,
                                  config.with_baselines, config.baseline);
  return out;
}

SyntheticRun synthetic_run(const ScenarioConfig& config,
                           const MonitorState& state, std::uint64_t seed,
                           bool in_control) {
  config.validate();
  const auto& w = config.monitor.window;
  DegradationScenario sc = config.scenario;
  sc.tau = in_control ? std::numeric_limits<std::size_t>::max()
                      : config.change_segment;
  sc.full_range_blocks = 0;
  const std::size_t n_blocks =
      in_control ? config.change_segment : config.monitor_segments;
  const auto data = generate_scada(sc, n_blocks, w.n_u, seed);

  SyntheticRun out;
  out.stats = monitor_stream(state, speeds_of(data.records),
                             powers_of(data.records), config.monitor,
                             config.with_baselines);
  std::vector<bool> post(state.tail_speed.size(), false);
  post.insert(post.end(), data.post_change.begin(), data.post_change.end());
  out.truth = window_labels(post, 0, w, out.stats.cvi.size());
  return out;
}

void bootstrap_in_control(const MonitorState& state,
                          const MonitorOptions& options,
                          std::span<const double> speed_pool, double noise_sd,
                          std::size_t n_records, std::uint64_t seed,
                          std::vector<double>& speed,
                          std::vector<double>& power) {
  if (speed_pool.empty()) throw DataError("empty speed pool");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, speed_pool.size() - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  speed.resize(n_records);
  for (auto& v : speed) v = speed_pool[pick(rng)];
  const auto mean =
      predict_power(state.reference, speed, options.spec, options.hyper).mean;
  power.resize(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    power[i] = mean[static_cast<Eigen::Index>(i)] + noise_sd * noise(rng);
  }
}

std::vector<double> for_pooling(const std::vector<double>& stats) {
  std::vector<double> out(stats);
  for (auto& v : out) {
    if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<bool> alarms_above(const std::vector<double>& stats, double h) {
  std::vector<bool> out;
  out.reserve(stats.size());
  for (double v : stats) out.push_back(v > h);
  return out;
}

int first_alarm_delay(const std::vector<bool>& alarms,
                      const std::vector<bool>& truth) {
  const auto first = std::find(truth.begin(), truth.end(), true);
  if (first == truth.end()) return -1;
  const auto k0 = static_cast<std::size_t>(first - truth.begin());
  for (std::size_t k = k0; k < alarms.size(); ++k) {
    if (alarms[k]) return static_cast<int>(k - k0);
  }
  return -1;
}

}  // namespace wpcm
