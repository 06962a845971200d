#include <doctest.h>

#include <sstream>

#include "wpcm/errors.hpp"
#include "wpcm/scada.hpp"

using wpcm::ScadaRecord;

namespace {

ScadaRecord rec(double v, double p, std::int64_t t = 0) {
  ScadaRecord r;
  r.epoch_seconds = t;
  r.timestamp = std::to_string(t);
  r.speed = v;
  r.power = p;
  return r;
}

wpcm::ParsedScada parse(const std::string& text) {
  std::istringstream in(text);
  return wpcm::parse_scada(in);
}

}  // namespace

TEST_CASE("timestamps") {
  std::int64_t s = 0;
  CHECK(wpcm::parse_iso8601("1970-01-01T00:00:00Z", s));
  CHECK(s == 0);
  CHECK(wpcm::parse_iso8601("2020-01-01 00:10", s));
  CHECK(s == 1577837400);
  CHECK(wpcm::parse_iso8601("2000-03-01T12:00:00.5", s));
  CHECK(s == 951912000);
  CHECK_FALSE(wpcm::parse_iso8601("2020-13-01T00:00:00", s));
  CHECK_FALSE(wpcm::parse_iso8601("yesterday", s));
}

TEST_CASE("parsing SCADA tables") {
  const std::string header = "timestamp,wind_speed_ms,power_kw\n";
  CHECK(parse(header).records.empty());

  const auto one = parse(header + "2020-01-01T00:00:00Z,7.5,1200\n");
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].speed == 7.5);
  CHECK(one.records[0].power == 1200.0);
  CHECK_FALSE(one.normalized);

  const auto bad = parse(header + "2020-01-01T00:00:00Z,fast,1200\n2020-01-01T00:10:00Z,-1,5\n"
                                  "2020-01-01T00:20:00Z,6,nan\n2020-01-01T00:30:00Z,6,7\n");
  CHECK(bad.records.size() == 1);
  CHECK(bad.skipped == 3);

  const auto reordered = parse(
      "temp,power_norm,timestamp,wind_speed_ms\n"
      "3,0.5,2020-01-01T00:10:00Z,8\n"
      "4,0.2,2020-01-01T00:00:00Z,6\n");
  REQUIRE(reordered.records.size() == 2);
  CHECK(reordered.normalized);
  CHECK(reordered.records[0].speed == 6.0);
  CHECK(reordered.records[1].power == 0.5);

  CHECK_THROWS_AS(parse("timestamp,power_kw\n"), wpcm::FormatError);
}

TEST_CASE("outlier removal per speed bin") {
  // One bin at 7.0 m/s: mean 0.5 and ML standard deviation 0.1.
  std::vector<ScadaRecord> recs{rec(7.02, 0.1), rec(7.03, 0.9)};
  for (int i = 0; i < 30; ++i) recs.push_back(rec(7.05, 0.5));
  recs.push_back(rec(4.0, 0.0));
  recs.push_back(rec(13.5, 0.0));
  const auto out = wpcm::remove_outliers(recs);
  CHECK(out.bins.size() == 80);
  const auto& bin = out.bins[20];
  CHECK(bin.lo == doctest::Approx(7.0));
  CHECK(bin.count == 32);
  CHECK(bin.mu == doctest::Approx(0.5));
  CHECK(bin.sigma == doctest::Approx(0.1));
  CHECK(bin.threshold == doctest::Approx(0.2674).epsilon(1e-4));
  REQUIRE(out.removed.size() == 1);
  CHECK(out.removed[0].record.power == 0.1);
  CHECK(out.kept.size() == recs.size() - 1);
  CHECK(out.kept[0].power == 0.9);
  CHECK(out.kept.back().speed == 13.5);

  wpcm::OutlierOptions upper;
  upper.tail = wpcm::OutlierTail::upper;
  const auto literal = wpcm::remove_outliers(recs, upper);
  REQUIRE(literal.removed.size() == 1);
  CHECK(literal.removed[0].record.power == 0.9);

  const std::vector<ScadaRecord> flat{rec(8.0, 0.4), rec(8.01, 0.4), rec(8.02, 0.4)};
  CHECK(wpcm::remove_outliers(flat).kept.size() == 3);

  std::ostringstream audit;
  wpcm::write_outlier_audit(audit, out.removed);
  CHECK(audit.str().rfind("timestamp,wind_speed_ms,power_norm,reason\n", 0) == 0);
}

TEST_CASE("records at or above the bin mean are never removed") {
  std::vector<ScadaRecord> recs;
  for (int i = 0; i < 2000; ++i) {
    const double v = 5.0 + 8.0 * ((i * 7919) % 2000) / 2000.0;
    const double p = 0.3 + 0.4 * ((i * 104729) % 1000) / 1000.0 - (i % 97 == 0 ? 0.3 : 0.0);
    recs.push_back(rec(v, p, i));
  }
  const auto out = wpcm::remove_outliers(recs);
  CHECK(out.kept.size() + out.removed.size() == recs.size());
  for (const auto& r : out.removed) {
    const auto b = static_cast<std::size_t>((r.record.speed - 5.0) / 0.1 + 1e-9);
    CHECK(r.record.power < out.bins[b].mu);
  }
  for (std::size_t i = 1; i < out.kept.size(); ++i) {
    CHECK(out.kept[i].epoch_seconds > out.kept[i - 1].epoch_seconds);
  }
}

TEST_CASE("rolling-window segmentation") {
  CHECK(wpcm::segment_count(2000, {500, 250}) == 7);
  CHECK(wpcm::segment_count(499, {500, 250}) == 0);
  CHECK(wpcm::segment_count(1000, {250, 250}) == 4);
  CHECK_THROWS_AS(wpcm::WindowSpec({100, 200}).validate(), wpcm::ConfigError);
  CHECK_THROWS_AS(wpcm::WindowSpec({100, 0}).validate(), wpcm::ConfigError);

  std::vector<double> speed(2000), power(2000);
  for (int i = 0; i < 2000; ++i) {
    speed[i] = i;
    power[i] = -i;
  }
  const auto segs = wpcm::segment(speed, power, {500, 250});
  REQUIRE(segs.size() == 7);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    CHECK(segs[k].index == k);
    CHECK(segs[k].first == 250 * k);
    CHECK(segs[k].size() == 500);
    for (std::size_t i = 0; i < 500; ++i) CHECK(segs[k].speed[i] == 250.0 * k + i);
  }
  const auto tiles = wpcm::segment(speed, power, {250, 250});
  CHECK(tiles.size() == 8);
  CHECK(tiles[7].power.back() == -1999.0);
}

TEST_CASE("normalization, clipping and coverage") {
  const std::vector<ScadaRecord> raw{rec(5, 2050.0), rec(6, 0.0)};
  const auto norm = wpcm::normalize_power(raw, 2050.0);
  CHECK(norm[0].power == 1.0);
  CHECK(norm[1].power == 0.0);
  CHECK(wpcm::normalize_power(norm, 1.0)[0].power == norm[0].power);
  CHECK_THROWS_AS(wpcm::normalize_power(raw, 0.0), wpcm::ConfigError);

  std::size_t dropped = 0;
  const auto clipped = wpcm::clip_to_range({rec(-0.0, 0), rec(25.0, 1), rec(25.1, 1)}, 0, 25,
                                           &dropped);
  CHECK(clipped.size() == 2);
  CHECK(dropped == 1);

  const auto spec = wpcm::SplineBasisSpec::power_curve_default();
  std::vector<double> speeds;
  for (int i = 0; i < 2500; ++i) speeds.push_back(0.01 * i);
  CHECK(wpcm::coverage_gaps(speeds, spec).empty());
  std::erase_if(speeds, [](double v) { return v >= 9.0 && v < 10.0; });
  const auto gaps = wpcm::coverage_gaps(speeds, spec);
  REQUIRE(gaps.size() == 1);
  CHECK(gaps[0].lo == 9.0);
  CHECK(gaps[0].hi == 10.0);
  CHECK(gaps[0].count == 0);
}
