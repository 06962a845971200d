#include "wpcm/cvi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wpcm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd spd_inverse(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError("coefficient covariance is not positive definite");
  }
  return llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

double log_det(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError("coefficient covariance is not positive definite");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// <(y_i - Z_i beta)^2> = (y_i - Z_i<beta>)^2 + Z_i Cov(beta) Z_i'.
VectorXd expected_sq_residuals(const PosteriorState& s, const MatrixXd& z,
                               const VectorXd& y) {
  const VectorXd m = s.mean_beta();
  const MatrixXd cov = s.second_moment() - m * m.transpose();
  const VectorXd fit = z * m;
  const VectorXd var = (z * cov).cwiseProduct(z).rowwise().sum();
  return ((y - fit).array().square() + var.array().max(0.0)).matrix();
}

void check_dims(const PosteriorState& s, const MatrixXd& z, const VectorXd& y,
                const PosteriorState& prior) {
  if (z.cols() != s.u.size() || prior.u.size() != s.u.size() ||
      z.rows() != y.size()) {
    throw DomainError("posterior, design matrix and data dimensions disagree");
  }
}

}  // namespace

void HyperParams::validate() const {
  if (!(a0 > 0.0) || !(b0 > 0.0)) {
    throw ConfigError("a0 and b0 must be positive");
  }
  if (maxiter < 0) {
    throw ConfigError("maxiter must be nonnegative");
  }
  if (!(nr_tol > 0.0) || nr_max_iter < 1) {
    throw ConfigError("Newton-Raphson tolerance and cap must be positive");
  }
}

PosteriorState PosteriorState::diffuse(int p) {
  PosteriorState s;
  s.u = VectorXd::Constant(p, std::log(1.0 / p));
  s.sigma_beta = MatrixXd::Identity(p, p);
  return s;
}

VectorXd PosteriorState::mean_beta() const {
  return (u.array() + 0.5 * sigma_beta.diagonal().array()).exp().matrix();
}

MatrixXd PosteriorState::second_moment() const {
  const VectorXd m = mean_beta();
  return (m * m.transpose()).cwiseProduct(sigma_beta.array().exp().matrix());
}

VectorXd PosteriorState::mean_tau() const {
  return (c.array() + 0.5 * d2.array()).exp().matrix();
}

void PosteriorState::validate() const {
  const Index p = u.size();
  if (sigma_beta.rows() != p || sigma_beta.cols() != p) {
    throw NumericError("posterior covariance has wrong shape");
  }
  if (c.size() != d2.size()) {
    throw NumericError("noise blocks c and d2 differ in length");
  }
  if ((sigma_beta.diagonal().array() <= 0.0).any() || (d2.array() <= 0.0).any()) {
    throw NumericError("posterior variances must be positive");
  }
  if (!sigma_beta.isApprox(sigma_beta.transpose(), 1e-12)) {
    throw NumericError("posterior covariance is not symmetric");
  }
  Eigen::LLT<MatrixXd> llt(sigma_beta);
  if (llt.info() != Eigen::Success) {
    throw NumericError("posterior covariance is not positive definite");
  }
}

void PosteriorState::reset_noise(Index n, const HyperParams& hyper) {
  c = VectorXd::Constant(n, std::log(hyper.a0 / hyper.b0));
  d2 = VectorXd::Ones(n);
}

bool project_to_pd(MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() >= floor) {
    return false;
  }
  const VectorXd vals = eig.eigenvalues().cwiseMax(floor);
  m = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose()).eval();
  return true;
}

double StationarityResiduals::max_abs() const {
  double out = 0.0;
  if (u.size()) out = std::max(out, u.cwiseAbs().maxCoeff());
  if (sigma2.size()) out = std::max(out, sigma2.cwiseAbs().maxCoeff());
  if (sigma_offdiag.size()) out = std::max(out, sigma_offdiag.cwiseAbs().maxCoeff());
  if (c.size()) out = std::max(out, c.cwiseAbs().maxCoeff());
  if (d2.size()) out = std::max(out, d2.cwiseAbs().maxCoeff());
  return out;
}

NRWorkspace make_workspace(const PosteriorState& state, const MatrixXd& z,
                           const VectorXd& y) {
  const Index p = state.dim();
  const Index n = z.rows();
  NRWorkspace ws;
  const VectorXd w = state.mean_tau();
  const VectorXd m = state.mean_beta();
  const MatrixXd prec = spd_inverse(state.sigma_beta);
  const double det = std::exp(log_det(state.sigma_beta));

  ws.A = det * prec;
  ws.B = z.array().colwise() * w.array();
  MatrixXd f(p, p);
  for (Index k = 0; k < p; ++k) {
    for (Index j = 0; j < p; ++j) {
      f(k, j) = (k == j) ? 0.0 : std::exp(state.sigma_beta(j, k)) * m(k);
    }
  }
  ws.C = z * f;
  ws.Dvec = z.array().square().matrix().transpose() * w;
  ws.H = z.transpose() * w.asDiagonal() * z;
  ws.Imat = m * m.transpose();
  ws.a1 = MatrixXd::Zero(p, p);
  ws.a2 = MatrixXd::Zero(p, p);
  ws.a3 = MatrixXd::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = 0; k < p; ++k) {
      if (j == k) continue;
      const double x0 = state.sigma_beta(j, k);
      const double q = prec(j, k) * prec(j, k) - prec(j, j) * prec(k, k);
      ws.a1(j, k) = det * q;
      ws.a2(j, k) = det * (2.0 * prec(j, k) - 2.0 * q * x0);
      ws.a3(j, k) = det * (1.0 - 2.0 * prec(j, k) * x0 + q * x0 * x0);
    }
  }
  ws.resid2 = n > 0 ? expected_sq_residuals(state, z, y) : VectorXd();
  return ws;
}

StationarityResiduals stationarity_residuals(const PosteriorState& state,
                                             const MatrixXd& z,
                                             const VectorXd& y,
                                             const PosteriorState& prior,
                                             const HyperParams& hyper) {
  check_dims(state, z, y, prior);
  const NRWorkspace ws = make_workspace(state, z, y);
  const Index p = state.dim();
  const Index n = z.rows();
  const VectorXd m = state.mean_beta();
  const VectorXd s2 = state.sigma2();
  const VectorXd prior_s2 = prior.sigma2();

  StationarityResiduals r;
  r.u.resize(p);
  r.sigma2.resize(p);
  r.sigma_offdiag = MatrixXd::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    double data = 0.0;
    for (Index i = 0; i < n; ++i) {
      data += ws.B(i, j) * (y(i) - ws.C(i, j));
    }
    const double sq = std::exp(2.0 * state.u(j) + 2.0 * s2(j));
    r.u(j) = data * m(j) - ws.Dvec(j) * sq -
             (state.u(j) - prior.u(j)) / prior_s2(j);
    double expansion = 0.0;  // Laplace expansion of |Sigma| along row j
    for (Index k = 0; k < p; ++k) {
      expansion += ws.A(j, k) * state.sigma_beta(j, k);
    }
    r.sigma2(j) = data * m(j) - 2.0 * ws.Dvec(j) * sq - 1.0 / prior_s2(j) +
                  ws.A(j, j) / expansion;
  }
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      const double x = state.sigma_beta(j, k);
      const double quad = ws.a1(j, k) * x * x + ws.a2(j, k) * x + ws.a3(j, k);
      r.sigma_offdiag(j, k) =
          -ws.H(j, k) * ws.Imat(j, k) * std::exp(x) +
          0.5 * (2.0 * ws.a1(j, k) * x + ws.a2(j, k)) / quad;
    }
  }
  r.c.resize(n);
  r.d2.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double tau = std::exp(state.c(i) + 0.5 * state.d2(i));
    const double rate = hyper.b0 + 0.5 * ws.resid2(i);
    r.c(i) = tau * rate - (hyper.a0 + 0.5);
    r.d2(i) = tau * rate - 1.0 / state.d2(i);
  }
  return r;
}

double elbo(const PosteriorState& state, const MatrixXd& z, const VectorXd& y,
            const PosteriorState& prior, const HyperParams& hyper) {
  check_dims(state, z, y, prior);
  if (state.c.size() != z.rows()) {
    throw DomainError("noise blocks do not match the segment length");
  }
  double j_noise = 0.0;
  if (z.rows() > 0) {
    const VectorXd r = expected_sq_residuals(state, z, y);
    const VectorXd tau = state.mean_tau();
    for (Index i = 0; i < z.rows(); ++i) {
      j_noise += (hyper.a0 + 0.5) * state.c(i) -
                 tau(i) * (hyper.b0 + 0.5 * r(i)) + 0.5 * std::log(state.d2(i));
    }
  }
  const VectorXd s2 = state.sigma2();
  const VectorXd prior_s2 = prior.sigma2();
  double j_prior = 0.0;
  for (Index j = 0; j < state.dim(); ++j) {
    const double du = state.u(j) - prior.u(j);
    j_prior -= (du * du + s2(j)) / (2.0 * prior_s2(j));
  }
  return j_noise + j_prior + 0.5 * log_det(state.sigma_beta);
}

PosteriorState coordinate_ascent_epoch(const PosteriorState& state,
                                       const MatrixXd& z, const VectorXd& y,
                                       const PosteriorState& prior,
                                       const HyperParams& hyper,
                                       EpochDiagnostics* diagnostics) {
  check_dims(state, z, y, prior);
  const Index p = state.dim();
  const Index n = z.rows();
  const auto& bnd = hyper.bounds;
  const double tol = hyper.nr_tol;
  const int cap = hyper.nr_max_iter;

  PosteriorState s = state;
  if (s.c.size() != n) {
    s.reset_noise(n, hyper);
  }
  EpochDiagnostics diag;
  auto record = [&diag](const MaximizeResult& r) {
    ++diag.blocks;
    if (!r.converged) {
      ++diag.solver_failures;
    }
    return r.x;
  };

  const VectorXd prior_u = prior.u;
  const VectorXd prior_s2 = prior.sigma2();
  const VectorXd w = s.mean_tau();
  MatrixXd gram = MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(
      (z.array().colwise() * w.array().sqrt()).matrix().transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const VectorXd proj = z.transpose() * w.cwiseProduct(y);
  VectorXd m = s.mean_beta();

  // b_j - sum_{k != j} G_jk <beta_k> exp(sigma_jk)
  auto partial_fit = [&](Index j) {
    double r = proj(j);
    for (Index k = 0; k < p; ++k) {
      if (k != j) r -= gram(j, k) * m(k) * std::exp(s.sigma_beta(j, k));
    }
    return r;
  };

  // Coefficient log-means.
  for (Index j = 0; j < p; ++j) {
    const double rj = partial_fit(j);
    const double v = s.sigma_beta(j, j);
    const double gjj = gram(j, j);
    const double up = prior_u(j);
    const double sp = prior_s2(j);
    ScalarObjective f;
    f.value = [=](double x) {
      return std::exp(x + 0.5 * v) * rj - 0.5 * gjj * std::exp(2 * x + 2 * v) -
             (x - up) * (x - up) / (2 * sp);
    };
    f.gradient = [=](double x) {
      return std::exp(x + 0.5 * v) * rj - gjj * std::exp(2 * x + 2 * v) -
             (x - up) / sp;
    };
    f.curvature = [=](double x) {
      return std::exp(x + 0.5 * v) * rj - 2 * gjj * std::exp(2 * x + 2 * v) -
             1.0 / sp;
    };
    s.u(j) = record(maximize_scalar(f, s.u(j), bnd.u, tol, cap));
    m(j) = std::exp(s.u(j) + 0.5 * v);
  }

  // Coefficient log-variances. |Sigma| is affine in one diagonal entry.
  MatrixXd prec = spd_inverse(s.sigma_beta);
  for (Index j = 0; j < p; ++j) {
    const double rj = partial_fit(j);
    const double uj = s.u(j);
    const double v0 = s.sigma_beta(j, j);
    const double pjj = prec(j, j);
    const double gjj = gram(j, j);
    const double sp = prior_s2(j);
    const Interval box{std::max(bnd.sigma2.lo, v0 - (1.0 - 1e-10) / pjj),
                       bnd.sigma2.hi};
    if (!(box.lo < box.hi)) {
      continue;
    }
    ScalarObjective f;
    f.value = [=](double v) {
      const double det_ratio = 1.0 + (v - v0) * pjj;
      return std::exp(uj + 0.5 * v) * rj -
             0.5 * gjj * std::exp(2 * uj + 2 * v) - v / (2 * sp) +
             0.5 * std::log(det_ratio);
    };
    f.gradient = [=](double v) {
      const double det_ratio = 1.0 + (v - v0) * pjj;
      return 0.5 * std::exp(uj + 0.5 * v) * rj -
             gjj * std::exp(2 * uj + 2 * v) - 1.0 / (2 * sp) +
             0.5 * pjj / det_ratio;
    };
    f.curvature = [=](double v) {
      const double det_ratio = 1.0 + (v - v0) * pjj;
      return 0.25 * std::exp(uj + 0.5 * v) * rj -
             2 * gjj * std::exp(2 * uj + 2 * v) -
             0.5 * pjj * pjj / (det_ratio * det_ratio);
    };
    const double v = record(maximize_scalar(f, v0, box, tol, cap));
    if (v != v0) {
      s.sigma_beta(j, j) = v;
      m(j) = std::exp(uj + 0.5 * v);
      // Rank-one inverse update.
      const VectorXd col = prec.col(j);
      prec.selfadjointView<Eigen::Lower>().rankUpdate(
          col, -(v - v0) / (1.0 + (v - v0) * pjj));
      prec.triangularView<Eigen::StrictlyUpper>() = prec.transpose();
    }
  }

  // Off-diagonal log-covariances. With delta = s - s0,
  // |Sigma(s)| / |Sigma(s0)| = 1 + 2 P_jk delta + (P_jk^2 - P_jj P_kk) delta^2.
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      const double x0 = s.sigma_beta(j, k);
      const double pjk = prec(j, k);
      const double qa = pjk * pjk - prec(j, j) * prec(k, k);
      if (!(qa < 0.0)) {
        continue;
      }
      const double weight = gram(j, k) * m(j) * m(k);
      // Feasible deltas keep the determinant ratio above 1e-10.
      const double disc = std::sqrt(pjk * pjk - qa * (1.0 - 1e-10));
      const double r1 = (-pjk + disc) / qa;
      const double r2 = (-pjk - disc) / qa;
      const Interval box{x0 + std::min(r1, r2), x0 + std::max(r1, r2)};
      ScalarObjective f;
      f.value = [=](double x) {
        const double d = x - x0;
        return -weight * std::exp(x) +
               0.5 * std::log(1.0 + 2.0 * pjk * d + qa * d * d);
      };
      f.gradient = [=](double x) {
        const double d = x - x0;
        const double q = 1.0 + 2.0 * pjk * d + qa * d * d;
        return -weight * std::exp(x) + (pjk + qa * d) / q;
      };
      f.curvature = [=](double x) {
        const double d = x - x0;
        const double q = 1.0 + 2.0 * pjk * d + qa * d * d;
        const double dq = 2.0 * pjk + 2.0 * qa * d;
        return -weight * std::exp(x) + 0.5 * (2.0 * qa * q - dq * dq) / (q * q);
      };
      const double x = record(maximize_scalar(f, x0, box, tol, cap));
      if (x != x0) {
        s.sigma_beta(j, k) = x;
        s.sigma_beta(k, j) = x;
        // Rank-two inverse update for the symmetric pair of entries.
        const double d = x - x0;
        const double ratio = 1.0 + 2.0 * pjk * d + qa * d * d;
        Eigen::Matrix<double, Eigen::Dynamic, 2> cols(p, 2);
        cols.col(0) = prec.col(j);
        cols.col(1) = prec.col(k);
        Eigen::Matrix2d mix;
        mix << -d * prec(k, k), 1.0 + d * pjk, 1.0 + d * pjk, -d * prec(j, j);
        mix *= d / ratio;
        prec.noalias() -= (cols * mix).lazyProduct(cols.transpose());
      }
    }
  }
  if (project_to_pd(s.sigma_beta, bnd.eig_floor)) {
    ++diag.projections;
  }

  // Noise precisions, one record at a time.
  if (n > 0) {
    const VectorXd r = expected_sq_residuals(s, z, y);
    const double shape = hyper.a0 + 0.5;
    for (Index i = 0; i < n; ++i) {
      const double rate = hyper.b0 + 0.5 * r(i);
      const double d2 = s.d2(i);
      // The log-mean update has a closed form.
      const double c = std::clamp(std::log(shape / rate) - 0.5 * d2, bnd.c.lo, bnd.c.hi);
      s.c(i) = c;

      ScalarObjective fd;
      fd.value = [=](double v) {
        return -std::exp(c + 0.5 * v) * rate + 0.5 * std::log(v);
      };
      fd.gradient = [=](double v) {
        return -0.5 * std::exp(c + 0.5 * v) * rate + 0.5 / v;
      };
      fd.curvature = [=](double v) {
        return -0.25 * std::exp(c + 0.5 * v) * rate - 0.5 / (v * v);
      };
      s.d2(i) = record(maximize_scalar(fd, d2, bnd.d2, tol, cap));
    }
  }

  if (diagnostics != nullptr) {
    *diagnostics = diag;
  }
  if (diag.blocks > 0 && 10 * diag.solver_failures > diag.blocks) {
    std::ostringstream msg;
    msg << "coordinate ascent: " << diag.solver_failures << " of "
        << diag.blocks << " scalar updates failed to converge";
    throw EpochError(msg.str(), diag);
  }
  return s;
}

PosteriorState fit_segment(const PosteriorState& prior,
                           std::span<const double> speed,
                           std::span<const double> power,
                           const HyperParams& hyper,
                           const SplineBasisSpec& spec) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  hyper.validate();
  PosteriorState s = prior;
  s.t = prior.t + 1;
  if (speed.empty()) {
    s.c.resize(0);
    s.d2.resize(0);
    return s;
  }
  const MatrixXd z = design_matrix(speed, spec);
  const VectorXd y = Eigen::Map<const VectorXd>(power.data(),
                                                static_cast<Index>(power.size()));
  s.reset_noise(z.rows(), hyper);
  for (int epoch = 0; epoch < hyper.maxiter; ++epoch) {
    s = coordinate_ascent_epoch(s, z, y, prior, hyper);
  }
  return s;
}

ConvergedFit fit_to_convergence(const PosteriorState& prior,
                                std::span<const double> speed,
                                std::span<const double> power,
                                const HyperParams& hyper,
                                const SplineBasisSpec& spec, int max_epochs,
                                double residual_tol, int check_every) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  if (speed.empty()) {
    throw DomainError("empty batch");
  }
  if (max_epochs < 1 || check_every < 1 || !(residual_tol > 0.0)) {
    throw DomainError("invalid convergence settings");
  }
  hyper.validate();
  const MatrixXd z = design_matrix(speed, spec);
  const VectorXd y = Eigen::Map<const VectorXd>(power.data(),
                                                static_cast<Index>(power.size()));
  ConvergedFit out;
  out.state = prior;
  out.state.t = prior.t + 1;
  out.state.reset_noise(z.rows(), hyper);
  while (out.epochs < max_epochs) {
    out.state = coordinate_ascent_epoch(out.state, z, y, prior, hyper);
    ++out.epochs;
    if (out.epochs % check_every == 0 || out.epochs == max_epochs) {
      out.max_residual =
          stationarity_residuals(out.state, z, y, prior, hyper).max_abs();
      if (out.max_residual < residual_tol) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

SequentialResult sequential_update(const SegmentStream& segments,
                                   const PosteriorState& init,
                                   const HyperParams& hyper,
                                   const SplineBasisSpec& spec) {
  SequentialResult out;
  out.trajectory.reserve(segments.size());
  PosteriorState current = init;
  for (const auto& seg : segments) {
    try {
      current = fit_segment(current, seg.speed, seg.power, hyper, spec);
    } catch (const std::exception& e) {
      out.failures.push_back({seg.index, e.what()});
      current.t += 1;
      current.c.resize(0);
      current.d2.resize(0);
    }
    out.trajectory.push_back(current);
  }
  return out;
}

PowerPrediction predict_power(const PosteriorState& state,
                              std::span<const double> speed,
                              const SplineBasisSpec& spec,
                              const HyperParams& hyper) {
  const MatrixXd z = design_matrix(speed, spec);
  const VectorXd m = state.mean_beta();
  const MatrixXd cov = state.second_moment() - m * m.transpose();
  double noise_var;
  if (state.c.size() > 0) {
    noise_var = (-state.c.array() + 0.5 * state.d2.array()).exp().mean();
  } else {
    noise_var = std::exp(-std::log(hyper.a0 / hyper.b0) + 0.5);
  }
  PowerPrediction out;
  out.mean = z * m;
  const VectorXd var = (z * cov).cwiseProduct(z).rowwise().sum();
  out.sd = (var.array().max(0.0) + noise_var).sqrt().matrix();
  return out;
}

}  // namespace wpcm
