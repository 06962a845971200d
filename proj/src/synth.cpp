#include "wpcm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "wpcm/errors.hpp"

namespace wpcm {

double true_curve(double v, const CurveParams& params) {
  if (v < params.cut_in) return 0.0;
  if (v > params.rated) return 1.0;
  return 1.0 - std::exp(-std::pow(v / params.scale, params.shape));
}

void WindProcess::validate() const {
  if (!(shape > 0.0) || !(scale > 0.0) || !(lower >= 0.0) || !(upper > lower)) {
    throw ConfigError("invalid wind-speed distribution");
  }
  if (!(incomplete_fraction >= 0.0 && incomplete_fraction <= 1.0)) {
    throw ConfigError("incomplete fraction must lie in [0, 1]");
  }
  if (incomplete_fraction > 0.0 &&
      !(incomplete_upper > lower && incomplete_upper <= upper)) {
    throw ConfigError("incomplete upper limit must lie inside the speed range");
  }
}

void DegradationScenario::validate() const {
  if (!(noise_sd >= 0.0)) {
    throw ConfigError("noise SD must be nonnegative");
  }
  if (!(relative_drop >= 0.0 && relative_drop < 1.0)) {
    throw ConfigError("relative drop must lie in [0, 1)");
  }
  if (xi.size() > 0) {
    if (xi.size() != spec.dimension()) {
      throw ConfigError("xi length must equal the basis dimension");
    }
    if ((xi.array() < 0.0).any()) {
      throw ConfigError("xi must be nonnegative");
    }
  }
  wind.validate();
}

double sample_truncated_weibull(double shape, double scale, double lower,
                                double upper, double uniform01) {
  auto cdf = [&](double x) { return -std::expm1(-std::pow(x / scale, shape)); };
  const double a = cdf(lower);
  const double b = cdf(upper);
  const double u = a + uniform01 * (b - a);
  const double x = scale * std::pow(-std::log1p(-u), 1.0 / shape);
  return std::clamp(x, lower, upper);
}

double scenario_power(const DegradationScenario& scenario, double v,
                      bool degraded) {
  double p = true_curve(v, scenario.curve);
  if (!degraded) return p;
  p *= 1.0 - scenario.relative_drop;
  if (scenario.xi.size() > 0) {
    p -= basis_row(v, scenario.spec).dot(scenario.xi);
  }
  return p;
}

namespace {

std::string format_timestamp(std::int64_t seconds) {
  const std::int64_t days = seconds / 86400;
  const std::int64_t rem = seconds % 86400;
  // Civil date from days since epoch.
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = yoe + era * 400;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  if (m <= 2) ++y;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y), static_cast<long long>(m),
                static_cast<long long>(d), static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

}  // namespace

SyntheticScada generate_scada(const DegradationScenario& scenario,
                              std::size_t n_blocks, std::size_t n_per_block,
                              std::uint64_t seed) {
  scenario.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& w = scenario.wind;
  constexpr std::int64_t kStart = 1577836800;  // 2020-01-01T00:00:00Z

  SyntheticScada out;
  out.records.reserve(n_blocks * n_per_block);
  out.post_change.reserve(n_blocks * n_per_block);
  out.block_incomplete.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const bool incomplete = b >= scenario.full_range_blocks &&
                            w.incomplete_fraction > 0.0 &&
                            unif(rng) < w.incomplete_fraction;
    out.block_incomplete.push_back(incomplete);
    const double hi = incomplete ? w.incomplete_upper : w.upper;
    const bool degraded = b >= scenario.tau;
    for (std::size_t i = 0; i < n_per_block; ++i) {
      ScadaRecord r;
      r.epoch_seconds = kStart + 600 * static_cast<std::int64_t>(out.records.size());
      r.timestamp = format_timestamp(r.epoch_seconds);
      r.speed = sample_truncated_weibull(w.shape, w.scale, w.lower, hi, unif(rng));
      r.power = scenario_power(scenario, r.speed, degraded) +
                scenario.noise_sd * noise(rng);
      out.records.push_back(std::move(r));
      out.post_change.push_back(degraded);
    }
  }
  return out;
}

void write_labels_csv(std::ostream& out, const SyntheticScada& data,
                      std::size_t n_per_block) {
  out << "timestamp,post_change,block,incomplete\n";
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const std::size_t b = n_per_block > 0 ? i / n_per_block : 0;
    out << data.records[i].timestamp << ',' << (data.post_change[i] ? 1 : 0)
        << ',' << b << ','
        << (b < data.block_incomplete.size() && data.block_incomplete[b] ? 1 : 0)
        << '\n';
  }
}

std::vector<bool> window_labels(const std::vector<bool>& post_change,
                                std::size_t first_record,
                                const WindowSpec& window,
                                std::size_t n_windows) {
  window.validate();
  std::vector<bool> out;
  out.reserve(n_windows);
  for (std::size_t k = 0; k < n_windows; ++k) {
    const std::size_t a = first_record + k * window.n_u;
    if (a + window.n_w > post_change.size()) {
      throw DomainError("window extends past the labelled records");
    }
    std::size_t n = 0;
    for (std::size_t i = a; i < a + window.n_w; ++i) n += post_change[i] ? 1 : 0;
    out.push_back(2 * n >= window.n_w);
  }
  return out;
}

}  // namespace wpcm
