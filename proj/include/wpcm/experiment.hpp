#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wpcm/baselines.hpp"
#include "wpcm/cvi.hpp"
#include "wpcm/detection.hpp"
#include "wpcm/scada.hpp"
#include "wpcm/synth.hpp"

namespace wpcm {

struct MonitorOptions {
  SplineBasisSpec spec = SplineBasisSpec::power_curve_default();
  HyperParams hyper;
  WindowSpec window;
  std::size_t init_records = 1000;
  int init_max_epochs = 2000;
  double init_residual_tol = 1e-7;
  // Leading monitoring segments whose final posterior replaces the starting
  // posterior as the in-control reference (0 keeps the starting posterior).
  std::size_t reference_warmup = 0;
  double shift_fraction = 0.1;
  double h = 1.0;
  void validate() const;
};

// Fit of the first init_records records from the diffuse prior.
ConvergedFit fit_starting_posterior(std::span<const double> speed,
                                    std::span<const double> power,
                                    const MonitorOptions& options);

struct BaselineOptions {
  WcdfOptions wcdf;
  double llr_bandwidth = 1.0;
  std::size_t gpr_max_points = 200;
  std::vector<double> gpr_edges;  // empty: 0.5 m/s bins from 3 to 15 m/s
  std::vector<double> llr_grid;   // empty: 0.25 m/s steps over the basis range
};

struct BaselineReferences {
  BaselineOptions options;
  HotellingReference lwz;
  GprHyper gpr_hyper;
  GprReference gpr;
  LlrConfig llr;
  std::size_t lwz_fit_failures = 0;
};

// Phase-I references from in-control segments. The local-linear chart uses
// the predictive mean of `reference` as its in-control curve and the mean
// squared residual of the segments around it as its variance.
BaselineReferences build_baseline_references(const SegmentStream& in_control,
                                              const PosteriorState& reference,
                                              const MonitorOptions& monitor,
                                              const BaselineOptions& options);

struct ChartStatistics {
  std::vector<double> cvi;
  std::vector<double> lwz;  // NaN where the curve fit failed
  std::vector<double> gpr;
  std::vector<double> llr;
  std::vector<PosteriorState> trajectory;
  std::size_t segment_failures = 0;
  std::size_t lwz_failures = 0;
};

double lwz_statistic(const Segment& segment, const BaselineReferences& refs);

// Reference posterior, hypotheses and baseline references after the
// starting fit and the warm-up segments.
struct MonitorState {
  PosteriorState start;
  PosteriorState reference;
  HypothesisConfig hypothesis;
  bool shift_fallback = false;
  bool has_baselines = false;
  BaselineReferences baselines;
  // Last n_w - n_u records of the history; the next segment starts with them.
  std::vector<double> tail_speed;
  std::vector<double> tail_power;
  std::vector<DetectionRecord> warmup_detections;  // against the start
};

// `speed`/`power` hold the starting records followed by the warm-up
// records. Baselines use the warm-up segments as Phase-I data, or the
// segments of the starting records without warm-up.
MonitorState establish_reference(const PosteriorState& start,
                                 std::span<const double> speed,
                                 std::span<const double> power,
                                 const MonitorOptions& options,
                                 bool with_baselines,
                                 const BaselineOptions& baseline = {});

// Monitors fresh records that follow the history of `state`.
ChartStatistics monitor_stream(const MonitorState& state,
                               std::span<const double> speed,
                               std::span<const double> power,
                               const MonitorOptions& options,
                               bool with_baselines);

// Synthetic experiment. History: init_records full-range records and the
// warm-up segments. Each replication then draws monitor_segments fresh
// blocks of n_u records; the change starts with fresh block change_segment.
struct ScenarioConfig {
  DegradationScenario scenario;  // tau is ignored; see change_segment
  MonitorOptions monitor;
  BaselineOptions baseline;
  std::size_t monitor_segments = 60;
  std::size_t change_segment = 30;
  bool with_baselines = true;
  void validate() const;
  std::size_t history_records() const;
};

struct SyntheticHistory {
  SyntheticScada data;
  MonitorState state;
  int init_epochs = 0;
  bool init_converged = false;
};

SyntheticHistory synthetic_history(const ScenarioConfig& config,
                                   std::uint64_t seed);

struct SyntheticRun {
  ChartStatistics stats;
  std::vector<bool> truth;  // per monitoring segment
};

// One monitoring replication. With in_control set no change occurs and
// only the change_segment segments before it are monitored.
SyntheticRun synthetic_run(const ScenarioConfig& config,
                           const MonitorState& state, std::uint64_t seed,
                           bool in_control);

// Fresh in-control records drawn around the reference posterior: speeds
// resampled from `speed_pool`, power from the predictive mean plus Gaussian
// noise of SD noise_sd.
void bootstrap_in_control(const MonitorState& state,
                          const MonitorOptions& options,
                          std::span<const double> speed_pool, double noise_sd,
                          std::size_t n_records, std::uint64_t seed,
                          std::vector<double>& speed,
                          std::vector<double>& power);

// NaN (no decision) becomes -infinity so it never exceeds a threshold.
std::vector<double> for_pooling(const std::vector<double>& stats);

std::vector<bool> alarms_above(const std::vector<double>& stats, double h);

// Segments from the first degraded segment to the first alarm at or after
// it; -1 when no alarm follows or nothing is degraded.
int first_alarm_delay(const std::vector<bool>& alarms,
                      const std::vector<bool>& truth);

}  // namespace wpcm
