#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpcm/experiment.hpp"
#include "wpcm/scada.hpp"

namespace wpcm::cli {

struct CalibrationSettings {
  double alpha = 1.0 / 200.0;
  int replications = kMinCalibrationReplications;
  std::size_t segments = 30;      // monitored segments per replication
  std::optional<double> noise_sd;  // data mode; default: residual SD of the history
  bool baselines = false;          // also calibrate the LWZ/GPR/LLR charts
  int threads = 1;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::vector<std::string> inputs;
  std::optional<double> rated_power_kw;
  MonitorOptions monitor;
  bool remove_outliers = true;
  OutlierOptions outliers;
  std::size_t min_per_interval = 5;
  CalibrationSettings calibration;
  BaselineOptions baseline;
  ScenarioConfig scenario;  // simulate and synthetic calibration
  std::size_t scenario_blocks = 44;
  std::vector<long> curve_segments{0, -1};

  void validate() const;
};

// Defaults overridden by the keys present in `j`. Unknown keys and
// ill-typed values throw ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

}  // namespace wpcm::cli
