#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "wpcm/posterior_io.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name)
      : dir(fs::temp_directory_path() / ("wpcm_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "wpcm");
  std::ostringstream out, err;
  Outcome r;
  r.code = wpcm::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Twelve blocks of 250 records; the change starts with block 8.
std::string small_config(const Workspace& ws) {
  const auto path = ws / "config.json";
  spit(path, R"({"scenario": {"blocks": 12, "tau": 8, "relative_drop": 0.1}})");
  return path;
}

}  // namespace

TEST_CASE("simulate is deterministic and labels every record") {
  Workspace ws("simulate");
  const auto cfg = small_config(ws);
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "5", "--out", ws / "a"}).code == 0);
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "5", "--out", ws / "b"}).code == 0);
  const auto a = slurp(ws / "a/scada.csv");
  CHECK(a == slurp(ws / "b/scada.csv"));
  CHECK(slurp(ws / "a/labels.csv") == slurp(ws / "b/labels.csv"));
  CHECK(line_count(a) == 3001);
  CHECK(line_count(slurp(ws / "a/labels.csv")) == 3001);
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "6", "--out", ws / "c"}).code == 0);
  CHECK(a != slurp(ws / "c/scada.csv"));
}

TEST_CASE("ingest writes cleaned records and an audit of removals") {
  Workspace ws("ingest");
  const auto cfg = small_config(ws);
  REQUIRE(run({"simulate", "--config", cfg, "--out", ws / "sim"}).code == 0);
  const auto r = run({"ingest", "--input", ws / "sim/scada.csv", "--out", ws / "ing"});
  REQUIRE(r.code == 0);
  const auto summary = json::parse(slurp(ws / "ing/ingest.json"));
  const auto removed = summary["outliers_removed"].get<std::size_t>();
  CHECK(removed > 0);
  CHECK(line_count(slurp(ws / "ing/outliers.csv")) == removed + 1);
  CHECK(line_count(slurp(ws / "ing/cleaned.csv")) == 3000 - removed + 1);
  CHECK(summary["records_kept"].get<std::size_t>() == 3000 - removed);
}

TEST_CASE("malformed and empty inputs") {
  Workspace ws("malformed");
  spit(ws / "bad.csv", "timestamp,power_kw\n2020-01-01T00:00:00Z,3\n");
  auto r = run({"ingest", "--input", ws / "bad.csv", "--out", ws / "x"});
  CHECK(r.code == wpcm::cli::kDataError);
  CHECK(r.err.find("wind_speed_ms") != std::string::npos);

  r = run({"ingest", "--input", ws / "missing.csv", "--out", ws / "x"});
  CHECK(r.code == wpcm::cli::kDataError);

  spit(ws / "empty.csv", "timestamp,wind_speed_ms,power_norm\n");
  r = run({"ingest", "--input", ws / "empty.csv", "--out", ws / "y"});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(line_count(slurp(ws / "y/cleaned.csv")) == 1);

  spit(ws / "kw.csv", "timestamp,wind_speed_ms,power_kw\n2020-01-01T00:00:00Z,7,300\n");
  r = run({"ingest", "--input", ws / "kw.csv", "--out", ws / "z"});
  CHECK(r.code == wpcm::cli::kUsageError);
  CHECK(r.err.find("rated_power_kw") != std::string::npos);
}

TEST_CASE("configuration and usage errors exit with code 1") {
  Workspace ws("usage");
  spit(ws / "bad.json", R"({"bogus": 1})");
  auto r = run({"simulate", "--config", ws / "bad.json", "--out", ws / "x"});
  CHECK(r.code == wpcm::cli::kUsageError);
  CHECK(r.err.find("bogus") != std::string::npos);
  spit(ws / "broken.json", "{");
  CHECK(run({"simulate", "--config", ws / "broken.json"}).code == wpcm::cli::kUsageError);
  CHECK(run({"frobnicate"}).code == wpcm::cli::kUsageError);
  CHECK(run({}).code == wpcm::cli::kUsageError);
  spit(ws / "few.json", R"({"calibration": {"replications": 100}})");
  r = run({"calibrate", "--config", ws / "few.json", "--out", ws / "x"});
  CHECK(r.code == wpcm::cli::kUsageError);
  CHECK(r.err.find("500") != std::string::npos);
}

TEST_CASE("fit-init, monitor and evaluate on simulated data") {
  Workspace ws("pipeline");
  const auto cfg = small_config(ws);
  REQUIRE(run({"simulate", "--config", cfg, "--out", ws / "sim"}).code == 0);
  const auto data = ws / "sim/scada.csv";
  REQUIRE(run({"fit-init", "--config", cfg, "--input", data, "--out", ws / "fit"}).code == 0);
  REQUIRE(run({"fit-init", "--config", cfg, "--input", data, "--out", ws / "fit2"}).code == 0);
  CHECK(slurp(ws / "fit/checkpoint.json") == slurp(ws / "fit2/checkpoint.json"));
  CHECK(fs::exists(ws / "fit/curve.svg"));

  const auto state = wpcm::posterior_from_json(json::parse(slurp(ws / "fit/checkpoint.json")));
  const auto spec = wpcm::SplineBasisSpec::power_curve_default();
  std::vector<double> grid;
  for (int i = 0; i <= 250; ++i) grid.push_back(0.1 * i);
  const auto curve = wpcm::predict_power(state, grid, spec);
  for (Eigen::Index i = 1; i < curve.mean.size(); ++i) {
    CHECK(curve.mean(i) >= curve.mean(i - 1) - 1e-12);
  }
  const auto fit = json::parse(slurp(ws / "fit/fit_init.json"));
  CHECK(fit["converged"].get<bool>());
  CHECK(fit["rmse"].get<double>() < 0.05);

  const auto m = run({"monitor", "--config", cfg, "--input", data, "--checkpoint",
                      ws / "fit/checkpoint.json", "--out", ws / "mon"});
  REQUIRE(m.code == 0);
  const auto report = json::parse(slurp(ws / "mon/report.json"));
  CHECK(report["schema"] == "wpcm.monitor/1");
  CHECK(report["window"]["n_w"] == 500);
  CHECK(report["window"]["n_u"] == 250);
  // 2000 fresh records after the 1000-record history; the first window
  // reaches back 250 records.
  REQUIRE(report["segments"].size() == 8);
  for (std::size_t k = 0; k < 8; ++k) {
    const auto& seg = report["segments"][k];
    CHECK(seg["t"] == k);
    CHECK(seg["first_record"] == 750 + 250 * k);
    CHECK(seg["alarms"].contains("cvi"));
    CHECK(seg["start"].is_string());
  }
  CHECK(line_count(slurp(ws / "mon/detection.csv")) == 9);
  CHECK(fs::exists(ws / "mon/lambda.svg"));

  const auto e = run({"evaluate", "--report", ws / "mon/report.json", "--labels",
                      ws / "sim/labels.csv", "--out", ws / "ev"});
  REQUIRE(e.code == 0);
  const auto ev = json::parse(slurp(ws / "ev/evaluation.json"));
  CHECK(ev["segments"] == 8);
  // Windows starting at records 1750 and later are mostly post-change.
  CHECK(ev["tp"].get<int>() + ev["fn"].get<int>() == 4);
}

TEST_CASE("fit-init reports uncovered speed intervals") {
  Workspace ws("coverage");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 25.0);
  std::ostringstream csv;
  csv << "timestamp,wind_speed_ms,power_norm\n";
  for (int i = 0; i < 1200; ++i) {
    double v = unif(rng);
    while (v >= 10.0 && v < 11.0) v = unif(rng);
    char ts[32];
    std::snprintf(ts, sizeof ts, "2021-01-%02dT%02d:%02d:00Z", 1 + i / 144, (i % 144) / 6,
                  10 * (i % 6));
    csv << ts << ',' << v << ',' << std::min(1.0, v / 14.0) << '\n';
  }
  spit(ws / "gap.csv", csv.str());
  const auto r = run({"fit-init", "--input", ws / "gap.csv", "--out", ws / "fit"});
  CHECK(r.code == wpcm::cli::kDataError);
  CHECK(r.err.find("[10, 11)") != std::string::npos);
  CHECK_FALSE(fs::exists(ws / "fit/checkpoint.json"));
}

TEST_CASE("evaluate scores a perfect report") {
  Workspace ws("evaluate");
  spit(ws / "labels.csv",
       "timestamp,post_change,block,incomplete\n"
       "2020-01-01T00:00:00Z,0,0,0\n2020-01-01T00:10:00Z,0,0,0\n"
       "2020-01-01T00:20:00Z,1,1,0\n2020-01-01T00:30:00Z,1,1,0\n");
  json report{{"segments",
               {{{"t", 0},
                 {"start", "2020-01-01T00:00:00Z"},
                 {"end", "2020-01-01T00:10:00Z"},
                 {"alarms", {{"cvi", false}}}},
                {{"t", 1},
                 {"start", "2020-01-01T00:20:00Z"},
                 {"end", "2020-01-01T00:30:00Z"},
                 {"alarms", {{"cvi", true}}}}}}};
  spit(ws / "report.json", report.dump());
  auto r = run({"evaluate", "--report", ws / "report.json", "--labels", ws / "labels.csv",
                "--out", ws / "ev"});
  REQUIRE(r.code == 0);
  const auto ev = json::parse(slurp(ws / "ev/evaluation.json"));
  CHECK(ev["precision"] == 1.0);
  CHECK(ev["recall"] == 1.0);
  CHECK(ev["f1"] == 1.0);
  CHECK(ev["first_alarm_delay"] == 0);

  r = run({"evaluate", "--report", ws / "report.json", "--labels", ws / "labels.csv",
           "--chart", "gpr", "--out", ws / "ev"});
  CHECK(r.code == wpcm::cli::kUsageError);
}
