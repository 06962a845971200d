#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wpcm/normal.hpp"

namespace wpcm {

// Gaussian copula with correlation matrix `sigma` (unit diagonal, SPD).
struct GaussianCopula {
  Eigen::MatrixXd sigma;

  static GaussianCopula independence(int dim);
  static GaussianCopula bivariate(double rho);
  int dim() const { return static_cast<int>(sigma.rows()); }
  void validate() const;
};

// Parameter-expanded Gaussian: z~ ~ N(mu, D sigma D) with D = diag(scale).
struct ExpandedGaussian {
  Eigen::VectorXd mu;
  Eigen::VectorXd scale;
  Eigen::MatrixXd sigma;

  int dim() const { return static_cast<int>(mu.size()); }
  Eigen::MatrixXd covariance() const;
  void validate() const;
};

// Copula plus marginals; the Sklar factorisation of a joint density.
struct CopulaModel {
  GaussianCopula copula;
  std::vector<LogNormalMarginal> marginals;
};

// Log-determinant of an SPD matrix; throws NumericError when not SPD.
double log_det_spd(const Eigen::MatrixXd& m);

// c(u) = |S|^{-1/2} exp(-z'(S^{-1} - I)z / 2), z_i = Phi^{-1}(u_i).
double gaussian_copula_density(std::span<const double> uvec,
                               const GaussianCopula& copula);
// Same density, parameterised by the normal scores z directly.
double gaussian_copula_log_density_scores(const Eigen::VectorXd& z,
                                          const GaussianCopula& copula);

// c(F_1(theta_1), ..., F_p(theta_p)) * prod f_i(theta_i).
double sklar_joint_pdf(const GaussianCopula& copula,
                       std::span<const LogNormalMarginal> marginals,
                       std::span<const double> theta);
double sklar_joint_log_pdf(const GaussianCopula& copula,
                           std::span<const LogNormalMarginal> marginals,
                           std::span<const double> theta);

// KL(N(mu1, sig1) || N(mu2, sig2)).
double kl_mvn(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sig1,
              const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sig2);

struct MonteCarloValue {
  double mean = 0.0;
  double std_error = 0.0;
};

struct KlDecomposition {
  MonteCarloValue total;
  MonteCarloValue copula;
  MonteCarloValue marginal_sum;
};

// Monte Carlo estimates of KL(q || p) and its copula / marginal split for two
// Gaussian-copula models with log-normal marginals. Samples are drawn from q.
KlDecomposition kl_decomposition_check(const CopulaModel& q,
                                       const CopulaModel& p,
                                       std::size_t n_samples,
                                       std::uint64_t seed);

// theta_i = F_i^{-1}(Phi((z~_i - mu_i) / scale_i)).
Eigen::VectorXd reparam_transform(const Eigen::VectorXd& z_tilde,
                                  const ExpandedGaussian& expanded,
                                  std::span<const LogNormalMarginal> marginals);
Eigen::VectorXd reparam_inverse(const Eigen::VectorXd& theta,
                                const ExpandedGaussian& expanded,
                                std::span<const LogNormalMarginal> marginals);
// d theta_i / d z~_i, strictly positive.
Eigen::VectorXd reparam_derivative(const Eigen::VectorXd& z_tilde,
                                   const ExpandedGaussian& expanded,
                                   std::span<const LogNormalMarginal> marginals);

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t used = 0;
  std::size_t rejected = 0;
};

using LogJoint = std::function<double(const Eigen::VectorXd& theta)>;

// E_q[log p(h(Z), X) - log q(Z) + sum log h'(Z_i)] with Z ~ N(mu, D S D) and
// h = reparam_transform. Non-finite log-joint samples are dropped; more than
// 1% dropped raises NumericError.
ElboEstimate reparam_elbo_estimate(const LogJoint& log_joint,
                                   const ExpandedGaussian& expanded,
                                   std::span<const LogNormalMarginal> marginals,
                                   std::size_t n_samples, std::uint64_t seed);

// Generic reparameterised ELBO over a user-supplied monotone map h. For a
// decreasing map the estimate carries the (-1)^p prefactor and uses |h'|.
// Only the Gaussian-copula (increasing) branch is used by the model.
enum class Monotonicity { kIncreasing, kDecreasing };

struct MonotoneMap {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h_prime;
  Monotonicity direction = Monotonicity::kIncreasing;
};

ElboEstimate reparam_elbo_generic(const LogJoint& log_joint,
                                  const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& covariance,
                                  const MonotoneMap& map,
                                  std::size_t n_samples, std::uint64_t seed);

// Multivariate normal log density.
double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                   const Eigen::LLT<Eigen::MatrixXd>& cov_llt);

}  // namespace wpcm
