#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wpcm/segment.hpp"
#include "wpcm/spline_basis.hpp"

namespace wpcm {

struct ScadaRecord {
  std::string timestamp;  // ISO-8601 as read
  std::int64_t epoch_seconds = 0;
  double speed = 0.0;  // m/s
  double power = 0.0;  // kW or normalized, see ParsedScada::normalized
};

struct ParsedScada {
  std::vector<ScadaRecord> records;
  std::size_t skipped = 0;
  bool normalized = false;  // true when read from a power_norm column
};

// Seconds since 1970-01-01T00:00:00 for "YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z]".
// Returns false on malformed input.
bool parse_iso8601(const std::string& text, std::int64_t& seconds);

// Reads a comma-separated file with a header naming `timestamp`,
// `wind_speed_ms` and `power_kw` or `power_norm` (any column order, extra
// columns ignored). Rows with unparsable or non-finite fields, or negative
// speed, are skipped and counted. Output is stably sorted by timestamp.
// Throws FormatError when a required column is missing.
ParsedScada parse_scada(std::istream& in);

struct SpeedBin {
  double lo = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double threshold = 0.0;
  std::size_t count = 0;
};

enum class OutlierTail {
  lower,  // remove power below the 1% quantile of the bin's Gaussian fit
  upper,  // literal reading: remove power above the 99% quantile
};

struct OutlierOptions {
  double first_bin = 5.0;
  double bin_width = 0.1;
  int bin_count = 80;
  double quantile = 0.01;
  OutlierTail tail = OutlierTail::lower;
};

struct RemovedRecord {
  ScadaRecord record;
  std::string reason;
};

struct OutlierResult {
  std::vector<ScadaRecord> kept;
  std::vector<RemovedRecord> removed;
  std::vector<SpeedBin> bins;
};

// Per-bin Gaussian fit (mean and maximum-likelihood SD of all in-bin power
// values). Bins with fewer than two records or zero spread remove nothing;
// records outside the binned speed range pass through. Order is preserved.
OutlierResult remove_outliers(const std::vector<ScadaRecord>& records,
                              const OutlierOptions& options = {});

struct WindowSpec {
  std::size_t n_w = 500;
  std::size_t n_u = 250;
  void validate() const;  // ConfigError unless 1 <= n_u <= n_w
};

std::size_t segment_count(std::size_t n_records, const WindowSpec& window);

// Windows [k n_u, k n_u + n_w) that fit inside the record list.
SegmentStream segment(const std::vector<ScadaRecord>& records,
                      const WindowSpec& window);
SegmentStream segment(const std::vector<double>& speed,
                      const std::vector<double>& power,
                      const WindowSpec& window);

// p <- p / rated_power. Throws ConfigError unless rated_power > 0.
std::vector<ScadaRecord> normalize_power(std::vector<ScadaRecord> records,
                                         double rated_power);

// Drops records whose speed lies outside [lower, upper].
std::vector<ScadaRecord> clip_to_range(const std::vector<ScadaRecord>& records,
                                       double lower, double upper,
                                       std::size_t* dropped = nullptr);

struct SpeedInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

// Intervals between consecutive knots (boundaries included) holding fewer
// than `min_count` speeds.
std::vector<SpeedInterval> coverage_gaps(const std::vector<double>& speed,
                                         const SplineBasisSpec& spec,
                                         std::size_t min_count = 5);

// CSV with header timestamp,wind_speed_ms,power_norm.
void write_scada_csv(std::ostream& out, const std::vector<ScadaRecord>& records);
// CSV with header timestamp,wind_speed_ms,power_norm,reason.
void write_outlier_audit(std::ostream& out,
                         const std::vector<RemovedRecord>& removed);

std::vector<double> speeds_of(const std::vector<ScadaRecord>& records);
std::vector<double> powers_of(const std::vector<ScadaRecord>& records);

}  // namespace wpcm
