#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wpcm/cvi.hpp"
#include "wpcm/errors.hpp"

namespace wpcm {

// In-control reference LN(u0, sigma0) and degraded alternative
// LN(u0 - d, sigma1) on the log-scale coefficients.
struct HypothesisConfig {
  Eigen::VectorXd u0;
  Eigen::MatrixXd sigma0;
  Eigen::VectorXd d;
  Eigen::MatrixXd sigma1;
  double h = 1.0;

  int dim() const { return static_cast<int>(u0.size()); }
  // Throws ConfigError on shape errors, negative shifts or h <= 0, and
  // NumericError when a covariance is not positive definite.
  void validate() const;

  // u0 and sigma0 from `reference`, d = shift_fraction * u0 and
  // sigma1 = sigma0. When some u0 entry is not positive the shift falls back
  // to shift_fraction * |u0| and `fallback_used` is set.
  static HypothesisConfig from_reference(const PosteriorState& reference,
                                         double shift_fraction = 0.1,
                                         double h = 1.0,
                                         bool* fallback_used = nullptr);
};

inline constexpr double kKlfDenominatorFloor = 1e-12;
inline constexpr double kInfiniteLambda = std::numeric_limits<double>::infinity();

// tr(S_ref^-1 S) + (m - m_ref)' S_ref^-1 (m - m_ref) - K + log|S_ref|/|S|,
// i.e. twice KL(N(m, S) || N(m_ref, S_ref)).
double kl_form(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
               const Eigen::VectorXd& ref_mean, const Eigen::MatrixXd& ref_cov);

// Ratio of the divergence from H0 to the divergence from H1. Returns
// +infinity when the denominator is below kKlfDenominatorFloor.
double klf_statistic(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                     const HypothesisConfig& hyp);
double klf_statistic(const PosteriorState& posterior,
                     const HypothesisConfig& hyp);

struct DetectionRecord {
  int t = 0;
  double lambda = 0.0;
  bool alarm = false;
};

std::vector<DetectionRecord> detect(const std::vector<PosteriorState>& trajectory,
                                    const HypothesisConfig& hyp);

struct CalibrationTarget {
  double alpha = 0.005;  // per-segment false-alarm probability

  static CalibrationTarget false_alarm_rate(double alpha);
  // In-control ARL of a per-segment chart: alpha = 1 / arl.
  static CalibrationTarget average_run_length(double arl);
};

class CalibrationError : public NumericError {
 public:
  CalibrationError(const std::string& what, double lo, double hi)
      : NumericError(what), lambda_min(lo), lambda_max(hi) {}
  double lambda_min;
  double lambda_max;
};

struct CalibrationResult {
  double h = 0.0;
  double target_alpha = 0.0;
  double achieved_alpha = 0.0;  // pooled exceedance fraction at h
  double std_error = 0.0;       // across replications
  double achieved_arl = 0.0;    // 1 / achieved_alpha (infinite when 0)
  int n_mc = 0;
  std::size_t n_statistics = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

// Returns the chart statistics of one in-control replication.
using InControlSimulator =
    std::function<std::vector<double>(std::uint64_t seed)>;

inline constexpr int kMinCalibrationReplications = 500;

// Runs n_mc replications with seeds stream_seed(seed, r) and sets h to the
// empirical quantile of the pooled statistics so that the fraction above h
// does not exceed the target. alpha = 0 yields h just above the largest
// simulated value. Replications run on up to `threads` workers; results are
// reduced in replication order.
CalibrationResult calibrate_threshold(const InControlSimulator& simulator,
                                      CalibrationTarget target, int n_mc,
                                      std::uint64_t seed, int threads = 1);

// Threshold from an already simulated pool of in-control statistics, one
// vector per replication.
CalibrationResult threshold_from_pool(
    const std::vector<std::vector<double>>& replications,
    CalibrationTarget target);

nlohmann::json hypothesis_to_json(const HypothesisConfig& hyp);
HypothesisConfig hypothesis_from_json(const nlohmann::json& j);
nlohmann::json detection_to_json(const std::vector<DetectionRecord>& records);
// CSV with header t,lambda,alarm; +infinity is written as "inf".
std::string detection_to_csv(const std::vector<DetectionRecord>& records);

}  // namespace wpcm
