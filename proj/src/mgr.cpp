#include "wpcm/mgr.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "wpcm/posterior_io.hpp"

namespace wpcm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + " is not positive definite");
  }
  return llt;
}

MatrixXd inverse_spd(const MatrixXd& m, const char* what) {
  return checked_llt(m, what).solve(MatrixXd::Identity(m.rows(), m.cols()));
}

double log_det_spd_local(const MatrixXd& m, const char* what) {
  const auto llt = checked_llt(m, what);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void check_shapes(const MgrPosterior& prior, const MatrixXd& z,
                  const VectorXd& y) {
  if (z.cols() != prior.mu_beta.size() || z.rows() != y.size()) {
    throw DomainError("design matrix does not match prior or targets");
  }
}

}  // namespace

MgrPosterior MgrPosterior::diffuse(int p) {
  MgrPosterior q;
  q.mu_beta = VectorXd::Constant(p, 1.0 / p);
  q.sigma_beta = MatrixXd::Identity(p, p);
  return q;
}

VectorXd MgrPosterior::mean_precision() const {
  return a.cwiseQuotient(b);
}

void MgrPosterior::validate() const {
  const Index p = mu_beta.size();
  if (sigma_beta.rows() != p || sigma_beta.cols() != p) {
    throw NumericError("covariance has wrong shape");
  }
  if (a.size() != b.size()) {
    throw NumericError("Gamma blocks differ in length");
  }
  if ((a.array() <= 0.0).any() || (b.array() <= 0.0).any()) {
    throw NumericError("Gamma parameters must be positive");
  }
  if (!sigma_beta.isApprox(sigma_beta.transpose(), 1e-12)) {
    throw NumericError("covariance is not symmetric");
  }
  checked_llt(sigma_beta, "covariance");
}

VectorXd mgr_expected_sq_residuals(const MgrPosterior& q, const MatrixXd& z,
                                   const VectorXd& y) {
  const VectorXd fit = z * q.mu_beta;
  const VectorXd var = (z * q.sigma_beta).cwiseProduct(z).rowwise().sum();
  return ((y - fit).array().square() + var.array()).matrix();
}

MgrPosterior mgr_fit(const MgrPosterior& prior, const MatrixXd& z,
                     const VectorXd& y, const HyperParams& hyper, int sweeps) {
  check_shapes(prior, z, y);
  hyper.validate();
  const MatrixXd prior_prec = inverse_spd(prior.sigma_beta, "prior covariance");
  const VectorXd prior_shift = prior_prec * prior.mu_beta;
  const Index n = z.rows();

  MgrPosterior q = prior;
  q.t = prior.t + 1;
  q.a = VectorXd::Constant(n, hyper.a0 + 0.5);
  if (n == 0) {
    q.b.resize(0);
    return q;
  }
  VectorXd w = VectorXd::Constant(n, hyper.a0 / hyper.b0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    const MatrixXd prec = prior_prec + z.transpose() * w.asDiagonal() * z;
    const auto llt = checked_llt(prec, "posterior precision");
    q.sigma_beta = llt.solve(MatrixXd::Identity(prec.rows(), prec.cols()));
    q.sigma_beta = 0.5 * (q.sigma_beta + q.sigma_beta.transpose());
    q.mu_beta = llt.solve(z.transpose() * w.cwiseProduct(y) + prior_shift);
    q.b = (hyper.b0 +
           0.5 * mgr_expected_sq_residuals(q, z, y).array()).matrix();
    w = q.a.cwiseQuotient(q.b);
  }
  if (sweeps <= 0) {
    q.b = VectorXd::Constant(n, hyper.b0);
  }
  return q;
}

MgrPosterior mgr_fit_segment(const MgrPosterior& prior,
                             std::span<const double> speed,
                             std::span<const double> power,
                             const HyperParams& hyper,
                             const SplineBasisSpec& spec) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  const MatrixXd z = design_matrix(speed, spec);
  const VectorXd y = Eigen::Map<const VectorXd>(power.data(),
                                                static_cast<Index>(power.size()));
  return mgr_fit(prior, z, y, hyper, hyper.maxiter);
}

double mgr_elbo(const MgrPosterior& q, const MgrPosterior& prior,
                const MatrixXd& z, const VectorXd& y,
                const HyperParams& hyper) {
  check_shapes(prior, z, y);
  if (q.a.size() != z.rows() || q.b.size() != z.rows()) {
    throw DomainError("Gamma blocks do not match the segment length");
  }
  const MatrixXd prior_prec = inverse_spd(prior.sigma_beta, "prior covariance");
  const VectorXd r = mgr_expected_sq_residuals(q, z, y);
  double j = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double a = q.a(i);
    const double b = q.b(i);
    const double log_prec = boost::math::digamma(a) - std::log(b);
    const double prec = a / b;
    j += 0.5 * log_prec - 0.5 * prec * r(i);
    j += (hyper.a0 - 1.0) * log_prec - hyper.b0 * prec;
    j += -a * std::log(b) - (a - 1.0) * log_prec + std::lgamma(a) + b * prec;
  }
  const VectorXd dm = q.mu_beta - prior.mu_beta;
  j -= 0.5 * static_cast<double>(z.rows()) * std::log(2.0 * std::numbers::pi);
  j -= 0.5 * log_det_spd_local(prior.sigma_beta, "prior covariance");
  j -= 0.5 * (dm.dot(prior_prec * dm) +
              (prior_prec.cwiseProduct(q.sigma_beta)).sum());
  j += 0.5 * log_det_spd_local(q.sigma_beta, "posterior covariance");
  return j;
}

double MgrResiduals::max_abs() const {
  double m = 0.0;
  if (sigma.size() > 0) m = std::max(m, sigma.cwiseAbs().maxCoeff());
  if (mu.size() > 0) m = std::max(m, mu.cwiseAbs().maxCoeff());
  if (a.size() > 0) m = std::max(m, a.cwiseAbs().maxCoeff());
  if (b.size() > 0) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

MgrResiduals mgr_stationarity(const MgrPosterior& q, const MgrPosterior& prior,
                              const MatrixXd& z, const VectorXd& y,
                              const HyperParams& hyper) {
  check_shapes(prior, z, y);
  const MatrixXd prior_prec = inverse_spd(prior.sigma_beta, "prior covariance");
  const VectorXd w = q.mean_precision();
  const VectorXd r = mgr_expected_sq_residuals(q, z, y);
  MgrResiduals out;
  out.sigma = -0.5 * (z.transpose() * w.asDiagonal() * z) - 0.5 * prior_prec +
              0.5 * inverse_spd(q.sigma_beta, "posterior covariance");
  out.mu = z.transpose() * w.cwiseProduct(y) -
           z.transpose() * w.asDiagonal() * z * q.mu_beta -
           prior_prec * q.mu_beta + prior_prec * prior.mu_beta;
  out.a.resize(z.rows());
  out.b.resize(z.rows());
  for (Index i = 0; i < z.rows(); ++i) {
    const double a = q.a(i);
    const double b = q.b(i);
    const double rate = hyper.b0 + 0.5 * r(i);
    out.a(i) = boost::math::trigamma(a) * (0.5 - a + hyper.a0) - rate / b + 1.0;
    out.b(i) = -(hyper.a0 + 0.5) / b + a * rate / (b * b);
  }
  return out;
}

double precision_gain_min_eigenvalue(const MatrixXd& sigma_prior,
                                     const MatrixXd& sigma_post) {
  const MatrixXd gain = inverse_spd(sigma_post, "posterior covariance") -
                        inverse_spd(sigma_prior, "prior covariance");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (gain + gain.transpose()),
                                              Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

std::vector<MgrPosterior> mgr_sequential(const SegmentStream& segments,
                                         const MgrPosterior& init,
                                         const HyperParams& hyper,
                                         const SplineBasisSpec& spec) {
  std::vector<MgrPosterior> out;
  out.reserve(segments.size());
  MgrPosterior current = init;
  for (const auto& seg : segments) {
    current = mgr_fit_segment(current, seg.speed, seg.power, hyper, spec);
    out.push_back(current);
  }
  return out;
}

PowerPrediction mgr_predict_power(const MgrPosterior& q,
                                  std::span<const double> speed,
                                  const SplineBasisSpec& spec) {
  const MatrixXd z = design_matrix(speed, spec);
  const double noise_var =
      q.a.size() > 0 ? q.b.cwiseQuotient(q.a).mean() : 0.0;
  PowerPrediction out;
  out.mean = z * q.mu_beta;
  const VectorXd var = (z * q.sigma_beta).cwiseProduct(z).rowwise().sum();
  out.sd = (var.array().max(0.0) + noise_var).sqrt().matrix();
  return out;
}

nlohmann::json mgr_to_json(const MgrPosterior& q) {
  nlohmann::json j;
  j["t"] = q.t;
  j["mu_beta"] = vector_to_json(q.mu_beta);
  j["sigma_beta"] = matrix_to_json(q.sigma_beta);
  j["a"] = vector_to_json(q.a);
  j["b"] = vector_to_json(q.b);
  return j;
}

MgrPosterior mgr_from_json(const nlohmann::json& j) {
  MgrPosterior q;
  if (!j.is_object() || !j.contains("t")) {
    throw FormatError("missing field 't'");
  }
  q.t = j.at("t").get<int>();
  q.mu_beta = vector_from_json(j, "mu_beta");
  q.sigma_beta = matrix_from_json(j, "sigma_beta");
  q.a = vector_from_json(j, "a");
  q.b = vector_from_json(j, "b");
  q.validate();
  return q;
}

}  // namespace wpcm
