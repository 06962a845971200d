#include "wpcm/scada.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "wpcm/errors.hpp"
#include "wpcm/normal.hpp"

namespace wpcm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (e - b >= 2 && s[b] == '"' && s[e - 1] == '"') {
    ++b;
    --e;
  }
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cur += ch;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(value);
}

bool parse_int(const std::string& s, std::size_t pos, std::size_t len, int& v) {
  if (pos + len > s.size()) return false;
  v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  return true;
}

// Days since 1970-01-01 in the proleptic Gregorian calendar.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2 ? 1 : 0;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = y - era * 400;
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + doe - 719468;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

bool parse_iso8601(const std::string& text, std::int64_t& seconds) {
  const std::string s = trim(text);
  int y, mo, d, h, mi, sec = 0;
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != ' ') || s[13] != ':') {
    return false;
  }
  if (!parse_int(s, 0, 4, y) || !parse_int(s, 5, 2, mo) ||
      !parse_int(s, 8, 2, d) || !parse_int(s, 11, 2, h) ||
      !parse_int(s, 14, 2, mi)) {
    return false;
  }
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!parse_int(s, pos + 1, 2, sec)) return false;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      }
    }
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) return false;
  static const int month_days[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (mo < 1 || mo > 12 || d < 1 || d > month_days[mo - 1] || h > 23 ||
      mi > 59 || sec > 60) {
    return false;
  }
  seconds = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
  return true;
}

ParsedScada parse_scada(std::istream& in) {
  ParsedScada out;
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("missing header row");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  auto find = [&header](const std::string& name) -> long {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<long>(i);
    }
    return -1;
  };
  const long ts_col = find("timestamp");
  const long v_col = find("wind_speed_ms");
  long p_col = find("power_kw");
  if (p_col < 0) {
    p_col = find("power_norm");
    out.normalized = p_col >= 0;
  }
  if (ts_col < 0) throw FormatError("missing required column 'timestamp'");
  if (v_col < 0) throw FormatError("missing required column 'wind_speed_ms'");
  if (p_col < 0) {
    throw FormatError("missing required column 'power_kw' or 'power_norm'");
  }
  const auto needed = static_cast<std::size_t>(std::max({ts_col, v_col, p_col}));
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    ScadaRecord r;
    if (cells.size() <= needed ||
        !parse_iso8601(cells[ts_col], r.epoch_seconds) ||
        !parse_double(cells[v_col], r.speed) ||
        !parse_double(cells[p_col], r.power) || r.speed < 0.0) {
      ++out.skipped;
      continue;
    }
    r.timestamp = cells[ts_col];
    out.records.push_back(std::move(r));
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const ScadaRecord& a, const ScadaRecord& b) {
                     return a.epoch_seconds < b.epoch_seconds;
                   });
  return out;
}

OutlierResult remove_outliers(const std::vector<ScadaRecord>& records,
                              const OutlierOptions& options) {
  if (options.bin_count < 1 || !(options.bin_width > 0.0) ||
      !(options.quantile > 0.0 && options.quantile < 0.5)) {
    throw ConfigError("invalid outlier options");
  }
  const auto nb = static_cast<std::size_t>(options.bin_count);
  const double upper = options.first_bin + options.bin_width * options.bin_count;
  auto bin_of = [&](double v) -> long {
    if (v < options.first_bin || v >= upper) return -1;
    // Nudge so that edges such as 5.3 land in their own bin despite rounding.
    const auto k = static_cast<long>(
        std::floor((v - options.first_bin) / options.bin_width + 1e-9));
    return std::clamp<long>(k, 0, options.bin_count - 1);
  };

  std::vector<double> sum(nb, 0.0);
  std::vector<std::size_t> count(nb, 0);
  for (const auto& r : records) {
    const long k = bin_of(r.speed);
    if (k >= 0) {
      sum[k] += r.power;
      ++count[k];
    }
  }
  OutlierResult out;
  out.bins.resize(nb);
  std::vector<double> sq(nb, 0.0);
  for (std::size_t k = 0; k < nb; ++k) {
    out.bins[k].lo = options.first_bin + options.bin_width * static_cast<double>(k);
    out.bins[k].count = count[k];
    out.bins[k].mu = count[k] > 0 ? sum[k] / count[k] : 0.0;
  }
  for (const auto& r : records) {
    const long k = bin_of(r.speed);
    if (k >= 0) {
      const double dv = r.power - out.bins[k].mu;
      sq[k] += dv * dv;
    }
  }
  const double z = normal_quantile(options.quantile);  // negative
  for (std::size_t k = 0; k < nb; ++k) {
    auto& b = out.bins[k];
    b.sigma = count[k] > 0 ? std::sqrt(sq[k] / count[k]) : 0.0;
    b.threshold = options.tail == OutlierTail::lower ? b.mu + z * b.sigma
                                                     : b.mu - z * b.sigma;
  }
  for (const auto& r : records) {
    const long k = bin_of(r.speed);
    bool drop = false;
    if (k >= 0) {
      const auto& b = out.bins[k];
      if (b.count >= 2 && b.sigma > 0.0) {
        drop = options.tail == OutlierTail::lower ? r.power < b.threshold
                                                  : r.power > b.threshold;
      }
    }
    if (drop) {
      out.removed.push_back(
          {r, options.tail == OutlierTail::lower ? "below_bin_quantile"
                                                 : "above_bin_quantile"});
    } else {
      out.kept.push_back(r);
    }
  }
  return out;
}

void WindowSpec::validate() const {
  if (n_u < 1 || n_u > n_w) {
    throw ConfigError("window requires 1 <= n_u <= n_w");
  }
}

std::size_t segment_count(std::size_t n_records, const WindowSpec& window) {
  window.validate();
  if (n_records < window.n_w) return 0;
  return (n_records - window.n_w) / window.n_u + 1;
}

SegmentStream segment(const std::vector<double>& speed,
                      const std::vector<double>& power,
                      const WindowSpec& window) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  const std::size_t count = segment_count(speed.size(), window);
  SegmentStream out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Segment s;
    s.index = k;
    s.first = k * window.n_u;
    s.speed.assign(speed.begin() + s.first, speed.begin() + s.first + window.n_w);
    s.power.assign(power.begin() + s.first, power.begin() + s.first + window.n_w);
    out.push_back(std::move(s));
  }
  return out;
}

SegmentStream segment(const std::vector<ScadaRecord>& records,
                      const WindowSpec& window) {
  return segment(speeds_of(records), powers_of(records), window);
}

std::vector<ScadaRecord> normalize_power(std::vector<ScadaRecord> records,
                                         double rated_power) {
  if (!(rated_power > 0.0) || !std::isfinite(rated_power)) {
    throw ConfigError("rated power must be positive");
  }
  for (auto& r : records) {
    r.power /= rated_power;
  }
  return records;
}

std::vector<ScadaRecord> clip_to_range(const std::vector<ScadaRecord>& records,
                                       double lower, double upper,
                                       std::size_t* dropped) {
  std::vector<ScadaRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.speed >= lower && r.speed <= upper) out.push_back(r);
  }
  if (dropped != nullptr) *dropped = records.size() - out.size();
  return out;
}

std::vector<SpeedInterval> coverage_gaps(const std::vector<double>& speed,
                                         const SplineBasisSpec& spec,
                                         std::size_t min_count) {
  spec.validate();
  std::vector<double> edges;
  edges.push_back(spec.lower);
  for (double k : spec.interior_knots) edges.push_back(k);
  edges.push_back(spec.upper);
  std::vector<SpeedInterval> gaps;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const bool last = i + 2 == edges.size();
    std::size_t n = 0;
    for (double v : speed) {
      if (v >= edges[i] && (v < edges[i + 1] || (last && v <= edges[i + 1]))) ++n;
    }
    if (n < min_count) gaps.push_back({edges[i], edges[i + 1], n});
  }
  return gaps;
}

void write_scada_csv(std::ostream& out, const std::vector<ScadaRecord>& records) {
  out << "timestamp,wind_speed_ms,power_norm\n";
  for (const auto& r : records) {
    out << r.timestamp << ',' << format_double(r.speed) << ','
        << format_double(r.power) << '\n';
  }
}

void write_outlier_audit(std::ostream& out,
                         const std::vector<RemovedRecord>& removed) {
  out << "timestamp,wind_speed_ms,power_norm,reason\n";
  for (const auto& r : removed) {
    out << r.record.timestamp << ',' << format_double(r.record.speed) << ','
        << format_double(r.record.power) << ',' << r.reason << '\n';
  }
}

std::vector<double> speeds_of(const std::vector<ScadaRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.speed);
  return v;
}

std::vector<double> powers_of(const std::vector<ScadaRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.power);
  return v;
}

}  // namespace wpcm
