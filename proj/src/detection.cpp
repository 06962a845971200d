#include "wpcm/detection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wpcm/parallel.hpp"
#include "wpcm/posterior_io.hpp"
#include "wpcm/rng.hpp"

namespace wpcm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Eigen::LLT<MatrixXd> factor(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

void HypothesisConfig::validate() const {
  const Index k = u0.size();
  if (k == 0) {
    throw ConfigError("hypothesis dimension is zero");
  }
  if (d.size() != k || sigma0.rows() != k || sigma0.cols() != k ||
      sigma1.rows() != k || sigma1.cols() != k) {
    throw ConfigError("hypothesis fields have inconsistent dimensions");
  }
  if ((d.array() < 0.0).any()) {
    throw ConfigError("shift vector d must be nonnegative");
  }
  if (!(h > 0.0)) {
    throw ConfigError("threshold h must be positive");
  }
  factor(sigma0, "reference covariance");
  factor(sigma1, "alternative covariance");
}

HypothesisConfig HypothesisConfig::from_reference(const PosteriorState& reference,
                                                  double shift_fraction,
                                                  double h,
                                                  bool* fallback_used) {
  if (!(shift_fraction >= 0.0)) {
    throw ConfigError("shift fraction must be nonnegative");
  }
  HypothesisConfig hyp;
  hyp.u0 = reference.u;
  hyp.sigma0 = reference.sigma_beta;
  hyp.sigma1 = reference.sigma_beta;
  hyp.h = h;
  const bool fallback = (reference.u.array() <= 0.0).any();
  hyp.d = shift_fraction * (fallback ? VectorXd(reference.u.cwiseAbs())
                                     : reference.u);
  if (fallback_used != nullptr) {
    *fallback_used = fallback;
  }
  hyp.validate();
  return hyp;
}

double kl_form(const VectorXd& mean, const MatrixXd& cov,
               const VectorXd& ref_mean, const MatrixXd& ref_cov) {
  const Index k = mean.size();
  if (cov.rows() != k || ref_mean.size() != k || ref_cov.rows() != k) {
    throw DomainError("dimension mismatch in divergence");
  }
  const auto ref = factor(ref_cov, "reference covariance");
  const auto cur = factor(cov, "posterior covariance");
  const VectorXd diff = mean - ref_mean;
  const double quad = diff.dot(ref.solve(diff));
  const double trace = ref.solve(cov).trace();
  return quad + (log_det(ref) - log_det(cur)) + trace - static_cast<double>(k);
}

double klf_statistic(const VectorXd& mean, const MatrixXd& cov,
                     const HypothesisConfig& hyp) {
  if (mean.size() != hyp.u0.size()) {
    throw DomainError("posterior and hypothesis dimensions differ");
  }
  const double num = kl_form(mean, cov, hyp.u0, hyp.sigma0);
  const double den = kl_form(mean, cov, hyp.u0 - hyp.d, hyp.sigma1);
  if (den < kKlfDenominatorFloor) {
    return kInfiniteLambda;
  }
  // Rounding can leave a vanishing divergence slightly negative.
  return std::max(num, 0.0) / den;
}

double klf_statistic(const PosteriorState& posterior,
                     const HypothesisConfig& hyp) {
  return klf_statistic(posterior.u, posterior.sigma_beta, hyp);
}

std::vector<DetectionRecord> detect(const std::vector<PosteriorState>& trajectory,
                                    const HypothesisConfig& hyp) {
  std::vector<DetectionRecord> out;
  out.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    DetectionRecord r;
    r.t = s.t;
    r.lambda = klf_statistic(s, hyp);
    r.alarm = r.lambda > hyp.h;
    out.push_back(r);
  }
  return out;
}

CalibrationTarget CalibrationTarget::false_alarm_rate(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("false-alarm rate must lie in [0, 1)");
  }
  return CalibrationTarget{alpha};
}

CalibrationTarget CalibrationTarget::average_run_length(double arl) {
  if (!(arl >= 1.0)) {
    throw ConfigError("in-control ARL must be at least 1");
  }
  return CalibrationTarget{1.0 / arl};
}

CalibrationResult threshold_from_pool(
    const std::vector<std::vector<double>>& replications,
    CalibrationTarget target) {
  std::vector<double> pool;
  for (const auto& rep : replications) {
    pool.insert(pool.end(), rep.begin(), rep.end());
  }
  if (pool.empty()) {
    throw CalibrationError("no in-control statistics were simulated", 0.0, 0.0);
  }
  for (double v : pool) {
    if (std::isnan(v)) {
      throw CalibrationError("in-control statistic is NaN", 0.0, 0.0);
    }
  }
  std::sort(pool.begin(), pool.end());
  const double lo = pool.front();
  const double hi = pool.back();
  const std::size_t n = pool.size();

  CalibrationResult res;
  res.target_alpha = target.alpha;
  res.n_mc = static_cast<int>(replications.size());
  res.n_statistics = n;
  res.lambda_min = lo;
  res.lambda_max = hi;

  if (target.alpha == 0.0) {
    if (std::isinf(hi)) {
      throw CalibrationError(
          "zero false-alarm rate needs a finite maximum statistic", lo, hi);
    }
    res.h = std::nextafter(hi, kInfiniteLambda);
  } else {
    const auto allowed =
        static_cast<std::size_t>(std::floor(target.alpha * static_cast<double>(n)));
    if (allowed == 0) {
      std::ostringstream msg;
      msg << "target false-alarm rate " << target.alpha
          << " is below the resolution 1/" << n << " of the simulated pool";
      throw CalibrationError(msg.str(), lo, hi);
    }
    res.h = pool[n - allowed - 1];
    if (std::isinf(res.h)) {
      throw CalibrationError("required quantile lies at the infinite sentinel",
                             lo, hi);
    }
    if (!(res.h > 0.0)) {
      res.h = std::nextafter(0.0, 1.0);
    }
  }

  std::size_t exceed = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& rep : replications) {
    std::size_t e = 0;
    for (double v : rep) {
      if (v > res.h) ++e;
    }
    exceed += e;
    const double f = rep.empty() ? 0.0 : static_cast<double>(e) / rep.size();
    sum += f;
    sum_sq += f * f;
  }
  res.achieved_alpha = static_cast<double>(exceed) / static_cast<double>(n);
  res.achieved_arl =
      exceed == 0 ? kInfiniteLambda : 1.0 / res.achieved_alpha;
  const double m = replications.size();
  if (m > 1) {
    const double mean = sum / m;
    const double var = std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0));
    res.std_error = std::sqrt(var / m);
  }
  return res;
}

CalibrationResult calibrate_threshold(const InControlSimulator& simulator,
                                      CalibrationTarget target, int n_mc,
                                      std::uint64_t seed, int threads) {
  if (n_mc < kMinCalibrationReplications) {
    throw ConfigError("calibration needs at least 500 replications");
  }
  if (!(target.alpha >= 0.0 && target.alpha < 1.0)) {
    throw ConfigError("false-alarm rate must lie in [0, 1)");
  }
  std::vector<std::vector<double>> reps(static_cast<std::size_t>(n_mc));
  parallel_for(n_mc, threads, [&](int r) {
    reps[r] = simulator(stream_seed(seed, static_cast<std::uint64_t>(r)));
  });
  return threshold_from_pool(reps, target);
}

nlohmann::json hypothesis_to_json(const HypothesisConfig& hyp) {
  nlohmann::json j;
  j["K"] = hyp.dim();
  j["u0"] = vector_to_json(hyp.u0);
  j["sigma0"] = matrix_to_json(hyp.sigma0);
  j["d"] = vector_to_json(hyp.d);
  j["sigma1"] = matrix_to_json(hyp.sigma1);
  j["h"] = hyp.h;
  return j;
}

HypothesisConfig hypothesis_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw FormatError("hypothesis record must be an object");
  }
  HypothesisConfig hyp;
  hyp.u0 = vector_from_json(j, "u0");
  hyp.sigma0 = matrix_from_json(j, "sigma0");
  hyp.d = vector_from_json(j, "d");
  hyp.sigma1 = j.contains("sigma1") ? matrix_from_json(j, "sigma1") : hyp.sigma0;
  if (!j.contains("h") || !j.at("h").is_number()) {
    throw FormatError("missing numeric field 'h'");
  }
  hyp.h = j.at("h").get<double>();
  if (j.contains("K") && j.at("K").get<int>() != hyp.dim()) {
    throw FormatError("field 'K' does not match u0");
  }
  hyp.validate();
  return hyp;
}

nlohmann::json detection_to_json(const std::vector<DetectionRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j;
    j["t"] = r.t;
    if (std::isinf(r.lambda)) {
      j["lambda"] = "inf";
    } else {
      j["lambda"] = r.lambda;
    }
    j["alarm"] = r.alarm;
    arr.push_back(j);
  }
  return arr;
}

std::string detection_to_csv(const std::vector<DetectionRecord>& records) {
  std::ostringstream out;
  out.precision(17);
  out << "t,lambda,alarm\n";
  for (const auto& r : records) {
    out << r.t << ',';
    if (std::isinf(r.lambda)) {
      out << "inf";
    } else {
      out << r.lambda;
    }
    out << ',' << (r.alarm ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace wpcm
