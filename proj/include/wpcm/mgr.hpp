#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "wpcm/cvi.hpp"
#include "wpcm/segment.hpp"
#include "wpcm/spline_basis.hpp"

namespace wpcm {

// Gaussian variational posterior of the coefficients with Gamma factors
// Gamma(a_i, b_i) on each record's noise precision.
struct MgrPosterior {
  Eigen::VectorXd mu_beta;
  Eigen::MatrixXd sigma_beta;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  int t = 0;

  // mu = 1/p, identity covariance.
  static MgrPosterior diffuse(int p);
  int dim() const { return static_cast<int>(mu_beta.size()); }
  Eigen::VectorXd mean_precision() const;  // a_i / b_i
  void validate() const;
};

// Closed-form block iteration: (Sigma, mu) given <sigma>, then (a, b).
// Starts from <sigma_i> = a0 / b0 and runs hyper.maxiter sweeps.
MgrPosterior mgr_fit_segment(const MgrPosterior& prior,
                             std::span<const double> speed,
                             std::span<const double> power,
                             const HyperParams& hyper,
                             const SplineBasisSpec& spec);

// Same iteration on a prepared design matrix.
MgrPosterior mgr_fit(const MgrPosterior& prior, const Eigen::MatrixXd& z,
                     const Eigen::VectorXd& y, const HyperParams& hyper,
                     int sweeps);

// Variational objective including digamma and log-gamma terms, up to
// constants of the prior on the noise precisions.
double mgr_elbo(const MgrPosterior& q, const MgrPosterior& prior,
                const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                const HyperParams& hyper);

struct MgrResiduals {
  Eigen::MatrixXd sigma;  // dJ/dSigma
  Eigen::VectorXd mu;     // dJ/dmu
  Eigen::VectorXd a;      // dJ/da_i
  Eigen::VectorXd b;      // dJ/db_i
  double max_abs() const;
};

// Analytic partial derivatives of mgr_elbo.
MgrResiduals mgr_stationarity(const MgrPosterior& q, const MgrPosterior& prior,
                              const Eigen::MatrixXd& z,
                              const Eigen::VectorXd& y,
                              const HyperParams& hyper);

// Expected squared residuals <(y_i - z_i beta)^2> under q.
Eigen::VectorXd mgr_expected_sq_residuals(const MgrPosterior& q,
                                          const Eigen::MatrixXd& z,
                                          const Eigen::VectorXd& y);

// Smallest eigenvalue of Sigma_post^{-1} - Sigma_prior^{-1}.
double precision_gain_min_eigenvalue(const Eigen::MatrixXd& sigma_prior,
                                     const Eigen::MatrixXd& sigma_post);

std::vector<MgrPosterior> mgr_sequential(const SegmentStream& segments,
                                         const MgrPosterior& init,
                                         const HyperParams& hyper,
                                         const SplineBasisSpec& spec);

PowerPrediction mgr_predict_power(const MgrPosterior& q,
                                  std::span<const double> speed,
                                  const SplineBasisSpec& spec);

// {"t", "mu_beta", "sigma_beta" (rows), "a", "b"}
nlohmann::json mgr_to_json(const MgrPosterior& q);
MgrPosterior mgr_from_json(const nlohmann::json& j);

}  // namespace wpcm
