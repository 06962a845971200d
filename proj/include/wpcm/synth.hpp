#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "wpcm/scada.hpp"
#include "wpcm/spline_basis.hpp"

namespace wpcm {

// Stepwise Weibull-CDF power curve.
struct CurveParams {
  double scale = 9.0;   // c (m/s)
  double shape = 3.0;   // k
  double cut_in = 3.0;  // m/s
  double rated = 14.0;  // m/s
};

// 0 below cut-in, 1 above rated, 1 - exp(-(v/c)^k) between.
double true_curve(double v, const CurveParams& params = {});

// Weibull(shape, scale) truncated to [lower, upper]. Each block of records is
// "incomplete" with probability incomplete_fraction, in which case its
// speeds are drawn from the same law truncated to [lower, incomplete_upper].
struct WindProcess {
  double shape = 2.0;
  double scale = 8.0;
  double lower = 0.0;
  double upper = 25.0;
  double incomplete_fraction = 0.0;
  double incomplete_upper = 6.5;
  void validate() const;
};

double sample_truncated_weibull(double shape, double scale, double lower,
                                double upper, double uniform01);

struct DegradationScenario {
  std::size_t tau = 0;          // first degraded block
  double relative_drop = 0.0;   // uniform multiplicative efficiency loss
  Eigen::VectorXd xi;           // optional per-coefficient shift (size p)
  SplineBasisSpec spec = SplineBasisSpec::power_curve_default();
  double noise_sd = 0.025;
  CurveParams curve;
  WindProcess wind;
  std::size_t full_range_blocks = 0;  // leading blocks never truncated
  void validate() const;
};

struct SyntheticScada {
  std::vector<ScadaRecord> records;
  std::vector<bool> post_change;       // per record
  std::vector<bool> block_incomplete;  // per block
};

// Noise-free power of the scenario at speed v, before or after the change.
double scenario_power(const DegradationScenario& scenario, double v,
                      bool degraded);

// n_blocks blocks of n_per_block records at 10-minute spacing from
// 2020-01-01T00:00:00Z. Records in blocks >= tau are degraded.
SyntheticScada generate_scada(const DegradationScenario& scenario,
                              std::size_t n_blocks, std::size_t n_per_block,
                              std::uint64_t seed);

// CSV with header timestamp,post_change,block,incomplete.
void write_labels_csv(std::ostream& out, const SyntheticScada& data,
                      std::size_t n_per_block);

// A window is degraded when at least half of its records are post-change.
std::vector<bool> window_labels(const std::vector<bool>& post_change,
                                std::size_t first_record,
                                const WindowSpec& window,
                                std::size_t n_windows);

}  // namespace wpcm
