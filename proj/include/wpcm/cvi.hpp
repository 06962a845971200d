#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wpcm/errors.hpp"
#include "wpcm/newton.hpp"
#include "wpcm/segment.hpp"
#include "wpcm/spline_basis.hpp"

namespace wpcm {

struct ParameterBounds {
  Interval u{-20.0, 20.0};
  Interval sigma2{1e-8, 10.0};
  Interval c{-20.0, 20.0};
  Interval d2{1e-8, 10.0};
  double eig_floor = 1e-8;
};

struct HyperParams {
  double a0 = 0.1;  // Gamma prior shape of the noise precision
  double b0 = 0.1;  // Gamma prior rate
  int maxiter = 30;
  double nr_tol = 1e-8;
  int nr_max_iter = 50;
  ParameterBounds bounds;

  void validate() const;
};

// Variational posterior of one segment. Coefficients are multivariate
// log-normal: log(beta) ~ N(u, sigma_beta). Each noise precision tau_i is
// log-normal with log-scale mean c_i and variance d2_i.
struct PosteriorState {
  Eigen::VectorXd u;
  Eigen::MatrixXd sigma_beta;
  Eigen::VectorXd c;
  Eigen::VectorXd d2;
  int t = 0;

  // u_j = log(1/p), unit log-variances, no correlation.
  static PosteriorState diffuse(int p);

  int dim() const { return static_cast<int>(u.size()); }
  Eigen::VectorXd sigma2() const { return sigma_beta.diagonal(); }
  // <beta_j> = exp(u_j + sigma_j^2 / 2)
  Eigen::VectorXd mean_beta() const;
  // <beta_j beta_k> = <beta_j><beta_k> exp(sigma_jk)
  Eigen::MatrixXd second_moment() const;
  // <tau_i> = exp(c_i + d2_i / 2)
  Eigen::VectorXd mean_tau() const;

  // Throws NumericError when sigma2 / d2 are not positive or sigma_beta is not
  // symmetric positive definite.
  void validate() const;

  // Fresh noise blocks for a segment of n records: c = log(a0/b0), d2 = 1.
  void reset_noise(Eigen::Index n, const HyperParams& hyper);
};

// Quantities of the coordinate-ascent stationarity equations for a state.
// a1/a2/a3 hold the quadratic |Sigma| = a1 s^2 + a2 s + a3 in the isolated
// off-diagonal entry s = sigma_jk.
struct NRWorkspace {
  Eigen::MatrixXd A;      // cofactors of Sigma_beta
  Eigen::MatrixXd B;      // Z_ij <tau_i>
  Eigen::MatrixXd C;      // sum_{k != j} Z_ik exp(sigma_jk) <beta_k>
  Eigen::VectorXd Dvec;   // sum_i Z_ij^2 <tau_i>
  Eigen::MatrixXd H;      // sum_i <tau_i> Z_ij Z_ik
  Eigen::MatrixXd Imat;   // exp(u_j + u_k + (sigma_j^2 + sigma_k^2) / 2)
  Eigen::MatrixXd a1, a2, a3;
  Eigen::VectorXd resid2;  // <(y_i - Z_i beta)^2>
};

NRWorkspace make_workspace(const PosteriorState& state,
                           const Eigen::MatrixXd& z, const Eigen::VectorXd& y);

// Partial derivatives of the objective, in the form of the stationarity
// equations (zero at a coordinate-wise optimum). sigma_offdiag is indexed
// (j, k) with j < k; the lower triangle is zero.
struct StationarityResiduals {
  Eigen::VectorXd u;
  Eigen::VectorXd sigma2;
  Eigen::MatrixXd sigma_offdiag;
  Eigen::VectorXd c;
  Eigen::VectorXd d2;

  double max_abs() const;
};

StationarityResiduals stationarity_residuals(const PosteriorState& state,
                                             const Eigen::MatrixXd& z,
                                             const Eigen::VectorXd& y,
                                             const PosteriorState& prior,
                                             const HyperParams& hyper);

// Evidence lower bound up to an additive constant that depends only on the
// prior and hyperparameters.
double elbo(const PosteriorState& state, const Eigen::MatrixXd& z,
            const Eigen::VectorXd& y, const PosteriorState& prior,
            const HyperParams& hyper);

struct EpochDiagnostics {
  int blocks = 0;
  int solver_failures = 0;
  int projections = 0;
};

class EpochError : public NumericError {
 public:
  EpochError(const std::string& what, EpochDiagnostics diag)
      : NumericError(what), diagnostics(diag) {}
  EpochDiagnostics diagnostics;
};

// One sweep: all u_j, then sigma_j^2, then sigma_jk (j < k, lexicographic),
// then (c_i, d2_i) for every record. Throws EpochError when more than 10% of
// the scalar updates fail to converge.
PosteriorState coordinate_ascent_epoch(const PosteriorState& state,
                                       const Eigen::MatrixXd& z,
                                       const Eigen::VectorXd& y,
                                       const PosteriorState& prior,
                                       const HyperParams& hyper,
                                       EpochDiagnostics* diagnostics = nullptr);

// Runs hyper.maxiter epochs on one segment, seeded by `prior` with fresh
// noise blocks. An empty segment returns the prior unchanged (coefficient
// blocks) with empty noise blocks.
PosteriorState fit_segment(const PosteriorState& prior,
                           std::span<const double> speed,
                           std::span<const double> power,
                           const HyperParams& hyper,
                           const SplineBasisSpec& spec);

struct ConvergedFit {
  PosteriorState state;
  int epochs = 0;
  bool converged = false;
  double max_residual = 0.0;
};

// Repeats epochs on one batch until every stationarity residual is below
// `residual_tol` (checked every `check_every` epochs) or `max_epochs` is hit.
ConvergedFit fit_to_convergence(const PosteriorState& prior,
                                std::span<const double> speed,
                                std::span<const double> power,
                                const HyperParams& hyper,
                                const SplineBasisSpec& spec, int max_epochs,
                                double residual_tol = 1e-7,
                                int check_every = 10);

struct SegmentFailure {
  std::size_t segment = 0;
  std::string reason;
};

struct SequentialResult {
  std::vector<PosteriorState> trajectory;
  std::vector<SegmentFailure> failures;
};

// Chains fit_segment over the stream; a segment whose fit throws carries its
// prior forward and is recorded in `failures`.
SequentialResult sequential_update(const SegmentStream& segments,
                                   const PosteriorState& init,
                                   const HyperParams& hyper,
                                   const SplineBasisSpec& spec);

struct PowerPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

// Posterior predictive mean Z<beta> and SD from Var(Z beta) plus the mean
// noise variance <1/tau>.
PowerPrediction predict_power(const PosteriorState& state,
                              std::span<const double> speed,
                              const SplineBasisSpec& spec,
                              const HyperParams& hyper = {});

// Eigenvalue floor with symmetric reconstruction; returns true if modified.
bool project_to_pd(Eigen::MatrixXd& m, double floor);

}  // namespace wpcm
