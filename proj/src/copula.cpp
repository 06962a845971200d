#include "wpcm/copula.hpp"

#include <cmath>
#include <random>

#include "wpcm/errors.hpp"

namespace wpcm {

namespace {

MonteCarloValue summarize(double sum, double sum_sq, std::size_t n) {
  MonteCarloValue out;
  const double dn = static_cast<double>(n);
  out.mean = sum / dn;
  const double var = std::max(0.0, (sum_sq - dn * out.mean * out.mean) /
                                       std::max(1.0, dn - 1.0));
  out.std_error = std::sqrt(var / dn);
  return out;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("covariance is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

GaussianCopula GaussianCopula::independence(int dim) {
  return GaussianCopula{Eigen::MatrixXd::Identity(dim, dim)};
}

GaussianCopula GaussianCopula::bivariate(double rho) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, rho, rho, 1.0;
  return GaussianCopula{s};
}

void GaussianCopula::validate() const {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw ConfigError("copula correlation must be a nonempty square matrix");
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
    throw ConfigError("copula correlation must be symmetric");
  }
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    if (std::abs(sigma(i, i) - 1.0) > 1e-12) {
      throw ConfigError("copula correlation must have unit diagonal");
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("copula correlation must be positive definite");
  }
}

Eigen::MatrixXd ExpandedGaussian::covariance() const {
  return scale.asDiagonal() * sigma * scale.asDiagonal();
}

void ExpandedGaussian::validate() const {
  if (scale.size() != mu.size() || sigma.rows() != mu.size() ||
      sigma.cols() != mu.size()) {
    throw ConfigError("expanded Gaussian dimensions disagree");
  }
  if ((scale.array() <= 0.0).any()) {
    throw ConfigError("expanded Gaussian scales must be positive");
  }
  GaussianCopula{sigma}.validate();
}

double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError("matrix is not positive definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                   const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
  const Eigen::VectorXd w = cov_llt.matrixL().solve(x - mean);
  const double log_det =
      2.0 * cov_llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * w.squaredNorm() - 0.5 * log_det -
         static_cast<double>(x.size()) * kLogSqrt2Pi;
}

double gaussian_copula_log_density_scores(const Eigen::VectorXd& z,
                                          const GaussianCopula& copula) {
  Eigen::LLT<Eigen::MatrixXd> llt(copula.sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericError("copula correlation is not positive definite");
  }
  const Eigen::VectorXd w = llt.matrixL().solve(z);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * log_det - 0.5 * (w.squaredNorm() - z.squaredNorm());
}

double gaussian_copula_density(std::span<const double> uvec,
                               const GaussianCopula& copula) {
  if (static_cast<int>(uvec.size()) != copula.dim()) {
    throw DomainError("copula argument dimension mismatch");
  }
  Eigen::VectorXd z(copula.dim());
  for (int i = 0; i < copula.dim(); ++i) {
    z(i) = normal_quantile(uvec[i]);
  }
  return std::exp(gaussian_copula_log_density_scores(z, copula));
}

double sklar_joint_log_pdf(const GaussianCopula& copula,
                           std::span<const LogNormalMarginal> marginals,
                           std::span<const double> theta) {
  const int p = copula.dim();
  if (static_cast<int>(marginals.size()) != p ||
      static_cast<int>(theta.size()) != p) {
    throw DomainError("joint density dimension mismatch");
  }
  Eigen::VectorXd z(p);
  double log_marg = 0.0;
  for (int i = 0; i < p; ++i) {
    if (!(theta[i] > 0.0)) {
      throw DomainError("log-normal support requires theta > 0");
    }
    // Phi^{-1}(F_i(theta)) for a log-normal marginal is the standard score.
    z(i) = (std::log(theta[i]) - marginals[i].u) /
           std::sqrt(marginals[i].sigma2);
    log_marg += marginals[i].log_pdf(theta[i]);
  }
  return gaussian_copula_log_density_scores(z, copula) + log_marg;
}

double sklar_joint_pdf(const GaussianCopula& copula,
                       std::span<const LogNormalMarginal> marginals,
                       std::span<const double> theta) {
  return std::exp(sklar_joint_log_pdf(copula, marginals, theta));
}

double kl_mvn(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sig1,
              const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sig2) {
  const auto k = static_cast<double>(mu1.size());
  Eigen::LLT<Eigen::MatrixXd> llt2(sig2);
  if (llt2.info() != Eigen::Success) {
    throw NumericError("kl_mvn: second covariance is not positive definite");
  }
  const Eigen::VectorXd diff = mu1 - mu2;
  const double maha = diff.dot(llt2.solve(diff));
  const double trace = llt2.solve(sig1).trace();
  const double log_det2 =
      2.0 * llt2.matrixLLT().diagonal().array().log().sum();
  const double log_det1 = log_det_spd(sig1);
  return 0.5 * (maha + log_det2 - log_det1 + trace - k);
}

KlDecomposition kl_decomposition_check(const CopulaModel& q,
                                       const CopulaModel& p,
                                       std::size_t n_samples,
                                       std::uint64_t seed) {
  const int dim = q.copula.dim();
  if (p.copula.dim() != dim || static_cast<int>(q.marginals.size()) != dim ||
      static_cast<int>(p.marginals.size()) != dim) {
    throw DomainError("kl_decomposition_check: dimension mismatch");
  }
  const Eigen::MatrixXd chol = cholesky_factor(q.copula.sigma);
  Eigen::LLT<Eigen::MatrixXd> llt_q(q.copula.sigma);
  Eigen::LLT<Eigen::MatrixXd> llt_p(p.copula.sigma);
  if (llt_p.info() != Eigen::Success) {
    throw NumericError("copula correlation is not positive definite");
  }
  const double half_logdet_q =
      llt_q.matrixLLT().diagonal().array().log().sum();
  const double half_logdet_p =
      llt_p.matrixLLT().diagonal().array().log().sum();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double s_tot = 0, ss_tot = 0, s_cop = 0, ss_cop = 0, s_mar = 0, ss_mar = 0;
  Eigen::VectorXd e(dim), zq(dim), zp(dim);
  for (std::size_t n = 0; n < n_samples; ++n) {
    for (int i = 0; i < dim; ++i) {
      e(i) = normal(rng);
    }
    zq = chol * e;
    double marg = 0.0;
    for (int i = 0; i < dim; ++i) {
      const auto& mq = q.marginals[i];
      const auto& mp = p.marginals[i];
      const double log_theta = mq.u + std::sqrt(mq.sigma2) * zq(i);
      zp(i) = (log_theta - mp.u) / std::sqrt(mp.sigma2);
      // log f_q - log f_p; the -log(theta) Jacobians cancel.
      marg += -0.5 * std::log(mq.sigma2) - 0.5 * zq(i) * zq(i) +
              0.5 * std::log(mp.sigma2) + 0.5 * zp(i) * zp(i);
    }
    const double cq = -half_logdet_q -
                      0.5 * (llt_q.matrixL().solve(zq).squaredNorm() -
                             zq.squaredNorm());
    const double cp = -half_logdet_p -
                      0.5 * (llt_p.matrixL().solve(zp).squaredNorm() -
                             zp.squaredNorm());
    const double cop = cq - cp;
    const double tot = cop + marg;
    s_tot += tot;
    ss_tot += tot * tot;
    s_cop += cop;
    ss_cop += cop * cop;
    s_mar += marg;
    ss_mar += marg * marg;
  }
  KlDecomposition out;
  out.total = summarize(s_tot, ss_tot, n_samples);
  out.copula = summarize(s_cop, ss_cop, n_samples);
  out.marginal_sum = summarize(s_mar, ss_mar, n_samples);
  return out;
}

Eigen::VectorXd reparam_transform(
    const Eigen::VectorXd& z_tilde, const ExpandedGaussian& expanded,
    std::span<const LogNormalMarginal> marginals) {
  const int p = expanded.dim();
  Eigen::VectorXd theta(p);
  for (int i = 0; i < p; ++i) {
    const double t = (z_tilde(i) - expanded.mu(i)) / expanded.scale(i);
    // F^{-1}(Phi(t)) for a log-normal collapses to exp(u + s t); this avoids
    // saturating Phi in the tails.
    theta(i) = std::exp(marginals[i].u + std::sqrt(marginals[i].sigma2) * t);
  }
  return theta;
}

Eigen::VectorXd reparam_inverse(const Eigen::VectorXd& theta,
                                const ExpandedGaussian& expanded,
                                std::span<const LogNormalMarginal> marginals) {
  const int p = expanded.dim();
  Eigen::VectorXd z(p);
  for (int i = 0; i < p; ++i) {
    const double t = (std::log(theta(i)) - marginals[i].u) /
                     std::sqrt(marginals[i].sigma2);
    z(i) = expanded.mu(i) + expanded.scale(i) * t;
  }
  return z;
}

Eigen::VectorXd reparam_derivative(
    const Eigen::VectorXd& z_tilde, const ExpandedGaussian& expanded,
    std::span<const LogNormalMarginal> marginals) {
  Eigen::VectorXd theta = reparam_transform(z_tilde, expanded, marginals);
  for (int i = 0; i < expanded.dim(); ++i) {
    theta(i) *= std::sqrt(marginals[i].sigma2) / expanded.scale(i);
  }
  return theta;
}

ElboEstimate reparam_elbo_generic(const LogJoint& log_joint,
                                  const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& covariance,
                                  const MonotoneMap& map,
                                  std::size_t n_samples, std::uint64_t seed) {
  const auto dim = mean.size();
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw NumericError("proposal covariance is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  double sum = 0.0, sum_sq = 0.0;
  std::size_t used = 0, rejected = 0;
  Eigen::VectorXd e(dim);
  for (std::size_t n = 0; n < n_samples; ++n) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      e(i) = normal(rng);
    }
    const Eigen::VectorXd z = mean + chol * e;
    const Eigen::VectorXd theta = map.h(z);
    const double lj = log_joint(theta);
    if (!std::isfinite(lj)) {
      ++rejected;
      continue;
    }
    const Eigen::VectorXd hp = map.h_prime(z);
    const double term =
        lj - mvn_log_pdf(z, mean, llt) + hp.array().abs().log().sum();
    sum += term;
    sum_sq += term * term;
    ++used;
  }
  if (static_cast<double>(rejected) > 0.01 * static_cast<double>(n_samples)) {
    throw NumericError("ELBO estimate rejected more than 1% of samples");
  }
  const MonteCarloValue mc = summarize(sum, sum_sq, used);
  ElboEstimate out{mc.mean, mc.std_error, used, rejected};
  if (map.direction == Monotonicity::kDecreasing && dim % 2 == 1) {
    out.value = -out.value;
  }
  return out;
}

ElboEstimate reparam_elbo_estimate(const LogJoint& log_joint,
                                   const ExpandedGaussian& expanded,
                                   std::span<const LogNormalMarginal> marginals,
                                   std::size_t n_samples, std::uint64_t seed) {
  expanded.validate();
  if (static_cast<int>(marginals.size()) != expanded.dim()) {
    throw DomainError("marginal count does not match proposal dimension");
  }
  MonotoneMap map;
  map.h = [&](const Eigen::VectorXd& z) {
    return reparam_transform(z, expanded, marginals);
  };
  map.h_prime = [&](const Eigen::VectorXd& z) {
    return reparam_derivative(z, expanded, marginals);
  };
  return reparam_elbo_generic(log_joint, expanded.mu, expanded.covariance(),
                              map, n_samples, seed);
}

}  // namespace wpcm
