#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wpcm/errors.hpp"

namespace wpcm {

class FitError : public NumericError {
 public:
  using NumericError::NumericError;
};

// ---- Weibull-CDF curve with a Hotelling T^2 chart ----

struct WcdfParams {
  double c = 8.0;  // scale (m/s)
  double k = 2.0;  // shape
};

struct WcdfOptions {
  double cut_in = 3.0;
  double rated = 14.0;
  WcdfParams initial{8.0, 2.0};
  int max_iter = 200;
  double tol = 1e-10;
  std::size_t min_points = 10;
};

// Stepwise curve: 0 below cut-in, 1 above rated.
double wcdf_power(double v, const WcdfParams& params, double cut_in,
                  double rated);

// Damped Gauss-Newton (Levenberg-Marquardt) least squares on the records
// strictly between cut-in and rated speed. Throws FitError when fewer than
// min_points records qualify or the iteration does not converge.
WcdfParams fit_wcdf(std::span<const double> speed, std::span<const double> power,
                    const WcdfOptions& options = {});

struct HotellingReference {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

// Sample mean and covariance of in-control parameter estimates.
HotellingReference hotelling_reference(const std::vector<WcdfParams>& params);

// (theta_t - mean)' cov^-1 (theta_t - mean); NumericError if cov is singular.
std::vector<double> hotelling_t2(const std::vector<WcdfParams>& params,
                                 const Eigen::Vector2d& mean,
                                 const Eigen::Matrix2d& cov);

// ---- Gaussian process regression with a T^2 chart ----

struct GprHyper {
  double length = 1.0;     // squared-exponential length scale (m/s)
  double amplitude = 0.5;  // kernel standard deviation
  double noise_var = 1e-3;
};

struct GprModel {
  GprHyper hyper;
  Eigen::VectorXd x;
  Eigen::VectorXd y;      // centred targets
  double y_mean = 0.0;
  Eigen::VectorXd alpha;  // (K + s^2 I)^-1 y
  Eigen::MatrixXd chol;   // lower Cholesky factor of K + s^2 I
  double jitter = 0.0;    // extra diagonal added after a failed factorization
};

struct GprPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // latent function covariance
};

// Every `stride`-th record when more than max_points are given (0 keeps all).
GprModel gpr_fit(std::span<const double> speed, std::span<const double> power,
                 const GprHyper& hyper, std::size_t max_points = 0);
GprPrediction gpr_predict(const GprModel& model, std::span<const double> at);
Eigen::VectorXd gpr_predict_mean(const GprModel& model,
                                 std::span<const double> at);
double gpr_log_marginal(const GprModel& model);

// Grid search maximizing the log marginal likelihood.
GprHyper select_gpr_hyper(std::span<const double> speed,
                          std::span<const double> power,
                          std::size_t max_points = 200);

// Pooled in-control profile on fixed speed bins. A profile covers a bin
// when it holds at least min_cover records there; each bin pools only its
// covering profiles.
struct GprReference {
  std::vector<double> edges;  // bin edges, size B + 1
  std::vector<GprModel> models;
  std::vector<std::vector<std::size_t>> cover;  // covering models per bin
  Eigen::VectorXd mean;  // pooled predictive mean at the bin centres
  Eigen::MatrixXd cov;   // pooled latent covariance at the bin centres
  double noise_var = 0.0;  // pooled noise variance of single records
  // Pooled predictive mean tabulated at kProfileNodes equally spaced points
  // per bin (row per bin), interpolated linearly in between.
  static constexpr int kProfileNodes = 33;
  Eigen::MatrixXd profile;
  std::size_t bin_of(double v) const;  // B when outside the bins
};

struct GprProfile {
  std::span<const double> speed;
  std::span<const double> power;
};

GprReference gpr_reference(const std::vector<GprProfile>& profiles,
                           const GprHyper& hyper,
                           const std::vector<double>& edges,
                           std::size_t max_points = 200,
                           std::size_t min_cover = 3);

// Pooled predictive mean at v (NaN in a bin no profile covers).
double gpr_reference_mean(const GprReference& reference, double v);

// Over the bins populated by the segment and covered by the reference:
// (ybar - yhat)' (cov + diag(noise / n_b))^-1 (ybar - yhat), where ybar is
// the bin mean of the segment and yhat the bin mean of the pooled
// prediction at the segment's own speeds.
double gpr_t2(const GprReference& reference, std::span<const double> speed,
              std::span<const double> power);

// ---- Local linear regression with a GLR statistic ----

struct LlrConfig {
  std::vector<double> grid;  // ascending speeds
  std::vector<double> g0;    // in-control curve on the grid
  double sigma0_sq = 1e-3;
  double bandwidth = 1.0;
  void validate() const;
};

// Linear interpolation of the in-control curve, constant beyond the grid.
double llr_reference(const LlrConfig& config, double v);

// Epanechnikov local linear fit evaluated at `at`. A window with fewer than
// two distinct speeds is widened by doubling the bandwidth.
std::vector<double> local_linear_smooth(std::span<const double> speed,
                                        std::span<const double> power,
                                        std::span<const double> at,
                                        double bandwidth);

// (1 / sigma0^2) [sum (y - g0)^2 - sum (y - ghat)^2].
double llr_glr(std::span<const double> speed, std::span<const double> power,
               const LlrConfig& config);

}  // namespace wpcm
