#include "wpcm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace wpcm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double wcdf_power(double v, const WcdfParams& params, double cut_in,
                  double rated) {
  if (v < cut_in) return 0.0;
  if (v > rated) return 1.0;
  return -std::expm1(-std::pow(v / params.c, params.k));
}

WcdfParams fit_wcdf(std::span<const double> speed, std::span<const double> power,
                    const WcdfOptions& options) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < speed.size(); ++i) {
    if (speed[i] > options.cut_in && speed[i] < options.rated) {
      xs.push_back(speed[i]);
      ys.push_back(power[i]);
    }
  }
  if (xs.size() < options.min_points) {
    throw FitError("too few records between cut-in and rated speed");
  }
  auto sse = [&](double c, double k) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] + std::expm1(-std::pow(xs[i] / c, k));
      s += r * r;
    }
    return s;
  };
  double c = options.initial.c;
  double k = options.initial.k;
  double f = sse(c, k);
  double lambda = 1e-3;
  for (int it = 0; it < options.max_iter; ++it) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double ratio = xs[i] / c;
      const double s = std::pow(ratio, k);
      const double e = std::exp(-s);
      const double r = ys[i] - (1.0 - e);
      Eigen::Vector2d g(e * (-k * s / c), e * s * std::log(ratio));
      jtj += g * g.transpose();
      jtr += g * r;
    }
    if (jtr.cwiseAbs().maxCoeff() < 1e-14) {
      return {c, k};
    }
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix2d a = jtj;
      a.diagonal() *= 1.0 + lambda;
      const Eigen::Vector2d step = a.ldlt().solve(jtr);
      const double nc = c + step(0);
      const double nk = k + step(1);
      const double nf = (nc > 0.0 && nk > 0.0) ? sse(nc, nk) : HUGE_VAL;
      if (std::isfinite(nf) && nf <= f) {
        const bool small = std::abs(step(0)) <= options.tol * (1.0 + c) &&
                           std::abs(step(1)) <= options.tol * (1.0 + k);
        c = nc;
        k = nk;
        const double improvement = f - nf;
        f = nf;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (small || improvement <= 1e-15 * (1.0 + f)) {
          return {c, k};
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: a local minimum.
      return {c, k};
    }
  }
  throw FitError("Weibull curve fit did not converge");
}

HotellingReference hotelling_reference(const std::vector<WcdfParams>& params) {
  if (params.size() < 3) {
    throw DomainError("need at least three parameter estimates");
  }
  HotellingReference ref;
  ref.mean.setZero();
  for (const auto& p : params) ref.mean += Eigen::Vector2d(p.c, p.k);
  ref.mean /= static_cast<double>(params.size());
  ref.cov.setZero();
  for (const auto& p : params) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.c, p.k) - ref.mean;
    ref.cov += d * d.transpose();
  }
  ref.cov /= static_cast<double>(params.size() - 1);
  return ref;
}

std::vector<double> hotelling_t2(const std::vector<WcdfParams>& params,
                                 const Eigen::Vector2d& mean,
                                 const Eigen::Matrix2d& cov) {
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  if (llt.info() != Eigen::Success ||
      cov.determinant() <= 1e-14 * cov.squaredNorm()) {
    throw NumericError("reference covariance is singular");
  }
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.c, p.k) - mean;
    out.push_back(d.dot(llt.solve(d)));
  }
  return out;
}

namespace {

double se_kernel(double a, double b, const GprHyper& h) {
  const double r = (a - b) / h.length;
  return h.amplitude * h.amplitude * std::exp(-0.5 * r * r);
}

void subsample(std::span<const double> speed, std::span<const double> power,
               std::size_t max_points, VectorXd& x, VectorXd& y) {
  const std::size_t n = speed.size();
  const std::size_t stride =
      (max_points == 0 || n <= max_points) ? 1 : (n + max_points - 1) / max_points;
  const std::size_t m = (n + stride - 1) / stride;
  x.resize(static_cast<Index>(m));
  y.resize(static_cast<Index>(m));
  for (std::size_t i = 0, j = 0; i < n; i += stride, ++j) {
    x(static_cast<Index>(j)) = speed[i];
    y(static_cast<Index>(j)) = power[i];
  }
}

}  // namespace

GprModel gpr_fit(std::span<const double> speed, std::span<const double> power,
                 const GprHyper& hyper, std::size_t max_points) {
  if (speed.size() != power.size() || speed.empty()) {
    throw DomainError("GP training data must be nonempty and aligned");
  }
  if (!(hyper.length > 0.0) || !(hyper.amplitude > 0.0) ||
      !(hyper.noise_var >= 0.0)) {
    throw ConfigError("GP hyperparameters must be positive");
  }
  GprModel m;
  m.hyper = hyper;
  subsample(speed, power, max_points, m.x, m.y);
  m.y_mean = m.y.mean();
  m.y.array() -= m.y_mean;
  const Index n = m.x.size();
  MatrixXd k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = se_kernel(m.x(i), m.x(j), hyper);
    }
  }
  k.diagonal().array() += hyper.noise_var;
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    m.jitter = 1e-8 * hyper.amplitude * hyper.amplitude + 1e-10;
    k.diagonal().array() += m.jitter;
    llt.compute(k);
    if (llt.info() != Eigen::Success) {
      throw NumericError("GP Gram matrix is ill-conditioned");
    }
  }
  m.chol = llt.matrixL();
  m.alpha = llt.solve(m.y);
  return m;
}

VectorXd gpr_predict_mean(const GprModel& model, std::span<const double> at) {
  VectorXd out(static_cast<Index>(at.size()));
  for (std::size_t j = 0; j < at.size(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < model.x.size(); ++i) {
      s += se_kernel(model.x(i), at[j], model.hyper) * model.alpha(i);
    }
    out(static_cast<Index>(j)) = s + model.y_mean;
  }
  return out;
}

GprPrediction gpr_predict(const GprModel& model, std::span<const double> at) {
  const Index n = model.x.size();
  const auto q = static_cast<Index>(at.size());
  MatrixXd ks(n, q);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < q; ++j) {
      ks(i, j) = se_kernel(model.x(i), at[static_cast<std::size_t>(j)], model.hyper);
    }
  }
  GprPrediction out;
  out.mean = (ks.transpose() * model.alpha).array() + model.y_mean;
  const MatrixXd v =
      model.chol.triangularView<Eigen::Lower>().solve(ks);
  MatrixXd kss(q, q);
  for (Index i = 0; i < q; ++i) {
    for (Index j = 0; j < q; ++j) {
      kss(i, j) = se_kernel(at[static_cast<std::size_t>(i)],
                            at[static_cast<std::size_t>(j)], model.hyper);
    }
  }
  out.cov = kss - v.transpose() * v;
  return out;
}

double gpr_log_marginal(const GprModel& model) {
  const double n = static_cast<double>(model.x.size());
  return -0.5 * model.y.dot(model.alpha) -
         model.chol.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

GprHyper select_gpr_hyper(std::span<const double> speed,
                          std::span<const double> power,
                          std::size_t max_points) {
  const double lengths[] = {0.5, 1.0, 2.0, 4.0};
  const double amplitudes[] = {0.1, 0.3, 1.0};
  const double noises[] = {1e-4, 1e-3, 1e-2};
  GprHyper best;
  double best_lml = -HUGE_VAL;
  for (double l : lengths) {
    for (double a : amplitudes) {
      for (double s : noises) {
        const GprHyper h{l, a, s};
        try {
          const double lml = gpr_log_marginal(gpr_fit(speed, power, h, max_points));
          if (lml > best_lml) {
            best_lml = lml;
            best = h;
          }
        } catch (const NumericError&) {
        }
      }
    }
  }
  if (!std::isfinite(best_lml)) {
    throw NumericError("no GP hyperparameter candidate could be fitted");
  }
  return best;
}

std::size_t GprReference::bin_of(double v) const {
  const std::size_t nb = edges.size() - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  if (it == edges.begin() || it == edges.end()) return nb;
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

GprReference gpr_reference(const std::vector<GprProfile>& profiles,
                           const GprHyper& hyper,
                           const std::vector<double>& edges,
                           std::size_t max_points, std::size_t min_cover) {
  if (profiles.empty() || edges.size() < 2) {
    throw DomainError("GP reference needs profiles and at least one bin");
  }
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw DomainError("GP bin edges must be ascending");
  }
  GprReference ref;
  ref.edges = edges;
  const std::size_t nb = edges.size() - 1;
  std::vector<double> centres;
  for (std::size_t b = 0; b < nb; ++b) {
    centres.push_back(0.5 * (edges[b] + edges[b + 1]));
  }
  ref.cover.assign(nb, {});
  const auto n = static_cast<Index>(nb);
  ref.mean = VectorXd::Zero(n);
  ref.cov = MatrixXd::Zero(n, n);
  MatrixXd pairs = MatrixXd::Zero(n, n);
  double noise = 0.0;
  std::size_t noise_n = 0;
  for (const auto& prof : profiles) {
    std::vector<std::size_t> count(nb + 1, 0);
    for (double v : prof.speed) ++count[ref.bin_of(v)];
    GprModel m = gpr_fit(prof.speed, prof.power, hyper, max_points);
    const GprPrediction p = gpr_predict(m, centres);
    const std::size_t id = ref.models.size();
    for (std::size_t i = 0; i < nb; ++i) {
      if (count[i] < min_cover) continue;
      ref.cover[i].push_back(id);
      const auto ii = static_cast<Index>(i);
      ref.mean(ii) += p.mean(ii);
      for (std::size_t j = 0; j < nb; ++j) {
        if (count[j] < min_cover) continue;
        const auto jj = static_cast<Index>(j);
        ref.cov(ii, jj) += p.cov(ii, jj);
        pairs(ii, jj) += 1.0;
      }
    }
    // Residual variance of all records around the profile's own fit.
    const VectorXd fitted = gpr_predict_mean(m, prof.speed);
    for (std::size_t i = 0; i < prof.power.size(); ++i) {
      const double r = prof.power[i] - fitted(static_cast<Index>(i));
      noise += r * r;
      ++noise_n;
    }
    ref.models.push_back(std::move(m));
  }
  for (Index i = 0; i < n; ++i) {
    const auto k = ref.cover[static_cast<std::size_t>(i)].size();
    ref.mean(i) = k > 0 ? ref.mean(i) / static_cast<double>(k)
                        : std::numeric_limits<double>::quiet_NaN();
    for (Index j = 0; j < n; ++j) {
      if (pairs(i, j) > 0.0) ref.cov(i, j) /= pairs(i, j);
    }
  }
  ref.cov = 0.5 * (ref.cov + ref.cov.transpose());
  ref.noise_var = noise_n > 0 ? noise / static_cast<double>(noise_n) : hyper.noise_var;

  constexpr int q = GprReference::kProfileNodes;
  ref.profile = MatrixXd::Constant(n, q, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> nodes(q);
  for (std::size_t b = 0; b < nb; ++b) {
    if (ref.cover[b].empty()) continue;
    for (int k = 0; k < q; ++k) {
      nodes[static_cast<std::size_t>(k)] =
          edges[b] + (edges[b + 1] - edges[b]) * k / (q - 1);
    }
    VectorXd s = VectorXd::Zero(q);
    for (std::size_t id : ref.cover[b]) s += gpr_predict_mean(ref.models[id], nodes);
    ref.profile.row(static_cast<Index>(b)) =
        s.transpose() / static_cast<double>(ref.cover[b].size());
  }
  return ref;
}

double gpr_reference_mean(const GprReference& reference, double v) {
  const std::size_t b = reference.bin_of(v);
  if (b >= reference.cover.size() || reference.cover[b].empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  constexpr int q = GprReference::kProfileNodes;
  const double lo = reference.edges[b];
  const double width = reference.edges[b + 1] - lo;
  const double pos = std::clamp((v - lo) / width * (q - 1), 0.0, double(q - 1));
  const int k = std::min(static_cast<int>(pos), q - 2);
  const double w = pos - k;
  const auto row = static_cast<Index>(b);
  return (1.0 - w) * reference.profile(row, k) + w * reference.profile(row, k + 1);
}

double gpr_t2(const GprReference& reference, std::span<const double> speed,
              std::span<const double> power) {
  if (speed.size() != power.size()) {
    throw DomainError("speed and power lengths differ");
  }
  const std::size_t nb = reference.edges.size() - 1;
  std::vector<std::vector<double>> at(nb);
  std::vector<double> sum(nb, 0.0);
  for (std::size_t i = 0; i < speed.size(); ++i) {
    const std::size_t b = reference.bin_of(speed[i]);
    if (b >= nb || reference.cover[b].empty()) continue;
    at[b].push_back(speed[i]);
    sum[b] += power[i];
  }
  std::vector<Index> used;
  for (std::size_t b = 0; b < nb; ++b) {
    if (!at[b].empty()) used.push_back(static_cast<Index>(b));
  }
  if (used.empty()) return 0.0;
  const auto m = static_cast<Index>(used.size());
  VectorXd diff(m);
  MatrixXd s(m, m);
  for (Index i = 0; i < m; ++i) {
    const auto bi = static_cast<std::size_t>(used[i]);
    const auto cnt = static_cast<double>(at[bi].size());
    double pred = 0.0;
    for (double v : at[bi]) pred += gpr_reference_mean(reference, v);
    pred /= cnt;
    diff(i) = sum[bi] / cnt - pred;
    for (Index j = 0; j < m; ++j) s(i, j) = reference.cov(used[i], used[j]);
    s(i, i) += reference.noise_var / cnt;
  }
  Eigen::LDLT<MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("GP reference covariance is singular");
  }
  return diff.dot(ldlt.solve(diff));
}

void LlrConfig::validate() const {
  if (grid.size() < 2 || grid.size() != g0.size()) {
    throw ConfigError("in-control curve needs at least two grid points");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw ConfigError("in-control grid must be ascending");
  }
  if (!(sigma0_sq > 0.0) || !(bandwidth > 0.0)) {
    throw ConfigError("in-control variance and bandwidth must be positive");
  }
}

double llr_reference(const LlrConfig& config, double v) {
  const auto& g = config.grid;
  if (v <= g.front()) return config.g0.front();
  if (v >= g.back()) return config.g0.back();
  const auto it = std::upper_bound(g.begin(), g.end(), v);
  const auto i = static_cast<std::size_t>(it - g.begin());
  const double w = (v - g[i - 1]) / (g[i] - g[i - 1]);
  return (1.0 - w) * config.g0[i - 1] + w * config.g0[i];
}

std::vector<double> local_linear_smooth(std::span<const double> speed,
                                        std::span<const double> power,
                                        std::span<const double> at,
                                        double bandwidth) {
  if (speed.size() != power.size() || speed.empty()) {
    throw DomainError("smoother needs aligned, nonempty data");
  }
  std::vector<std::size_t> order(speed.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return speed[a] < speed[b]; });
  std::vector<double> xs(order.size());
  std::vector<double> ys(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    xs[i] = speed[order[i]];
    ys[i] = power[order[i]];
  }
  std::vector<double> out;
  out.reserve(at.size());
  for (double x0 : at) {
    double h = bandwidth;
    double value = 0.0;
    const double reach = std::max(std::abs(x0 - xs.front()), std::abs(x0 - xs.back()));
    for (int widen = 0;; ++widen) {
      const auto lo = std::lower_bound(xs.begin(), xs.end(), x0 - h) - xs.begin();
      const auto hi = std::upper_bound(xs.begin(), xs.end(), x0 + h) - xs.begin();
      double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
      for (auto i = lo; i < hi; ++i) {
        const double u = (xs[i] - x0) / h;
        const double w = 0.75 * (1.0 - u * u);
        if (w <= 0.0) continue;
        const double dx = xs[i] - x0;
        s0 += w;
        s1 += w * dx;
        s2 += w * dx * dx;
        t0 += w * ys[i];
        t1 += w * dx * ys[i];
      }
      const double det = s0 * s2 - s1 * s1;
      if (s0 > 0.0 && det > 1e-12 * s0 * s0 * h * h) {
        value = (s2 * t0 - s1 * t1) / det;
        break;
      }
      if (widen >= 60 || h > 2.0 * (reach + bandwidth)) {
        if (s0 > 0.0) {
          value = t0 / s0;  // single distinct speed: local constant
          break;
        }
        throw NumericError("local linear smoother found no data");
      }
      h *= 2.0;
    }
    out.push_back(value);
  }
  return out;
}

double llr_glr(std::span<const double> speed, std::span<const double> power,
               const LlrConfig& config) {
  config.validate();
  if (speed.empty()) return 0.0;
  const std::vector<double> fit =
      local_linear_smooth(speed, power, speed, config.bandwidth);
  double ref = 0.0;
  double alt = 0.0;
  for (std::size_t i = 0; i < speed.size(); ++i) {
    const double r0 = power[i] - llr_reference(config, speed[i]);
    const double r1 = power[i] - fit[i];
    ref += r0 * r0;
    alt += r1 * r1;
  }
  return (ref - alt) / config.sigma0_sq;
}

}  // namespace wpcm
