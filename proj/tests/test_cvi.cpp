#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wpcm/cvi.hpp"
#include "wpcm/newton.hpp"
#include "wpcm/posterior_io.hpp"
#include "wpcm/synth.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using wpcm::HyperParams;
using wpcm::PosteriorState;
using wpcm::SplineBasisSpec;

namespace {

SplineBasisSpec small_spec() {
  SplineBasisSpec s;
  s.interior_knots = {4.0, 7.0, 10.0, 13.0};
  s.lower = 0.0;
  s.upper = 25.0;
  s.order = 3;
  return s;
}

struct Data {
  std::vector<double> speed;
  std::vector<double> power;
};

Data curve_data(std::size_t n, double noise, std::uint64_t seed, double lo = 0.0,
                double hi = 25.0, double efficiency = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> v(lo, hi);
  std::normal_distribution<double> e(0.0, 1.0);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    d.speed.push_back(v(rng));
    d.power.push_back(efficiency * wpcm::true_curve(d.speed.back()) + noise * e(rng));
  }
  return d;
}

PosteriorState random_state(int p, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PosteriorState s = PosteriorState::diffuse(p);
  for (auto& x : s.u) x = -2.0 + 0.5 * g(rng);
  MatrixXd a(p, p);
  for (auto& x : a.reshaped()) x = g(rng);
  s.sigma_beta = 0.05 * a * a.transpose() / p + 0.05 * MatrixXd::Identity(p, p);
  s.c = VectorXd::NullaryExpr(n, [&] { return 3.0 + g(rng); });
  s.d2 = VectorXd::NullaryExpr(n, [&] { return 0.1 + u(rng); });
  return s;
}

// Log density of a normal N(m, v) at x.
double log_normal_density(double x, double m, double v) {
  return -0.5 * std::log(2 * M_PI * v) - 0.5 * (x - m) * (x - m) / v;
}

// Full variational objective for one coefficient and one record by 2-D
// quadrature over (log beta, log tau); everything is a density in log
// coordinates so the Jacobians cancel.
double quadrature_elbo(const PosteriorState& q, const PosteriorState& prior,
                       double z, double y, const HyperParams& h) {
  const double u = q.u(0), s2 = q.sigma_beta(0, 0), c = q.c(0), d2 = q.d2(0);
  const double su = std::sqrt(s2), sd = std::sqrt(d2);
  return oracle::integrate(
      [&](double x) {
        const double beta = std::exp(x);
        const double inner = oracle::integrate(
            [&](double w) {
              const double tau = std::exp(w);
              const double loglik = 0.5 * w - 0.5 * std::log(2 * M_PI) -
                                    0.5 * tau * (y - z * beta) * (y - z * beta);
              const double logprior_tau = h.a0 * std::log(h.b0) - std::lgamma(h.a0) +
                                          h.a0 * w - h.b0 * tau;
              const double logq_tau = log_normal_density(w, c, d2);
              return std::exp(logq_tau) * (loglik + logprior_tau - logq_tau);
            },
            c - 10 * sd, c + 10 * sd, 80);
        const double logprior_b = log_normal_density(x, prior.u(0), prior.sigma_beta(0, 0));
        const double logq_b = log_normal_density(x, u, s2);
        return inner * std::exp(logq_b) + std::exp(logq_b) * (logprior_b - logq_b);
      },
      u - 10 * su, u + 10 * su, 80);
}

}  // namespace

TEST_CASE("bounded Newton solver") {
  auto lin = wpcm::newton_solve([](double x) { return x - 2.0; }, 0.0, {-10, 10}, 1e-12, 50);
  CHECK(lin.converged);
  CHECK(lin.root == doctest::Approx(2.0));
  auto ex = wpcm::newton_solve([](double x) { return std::exp(x) - 1.0; }, 0.5, {-10, 10},
                               1e-10, 50);
  CHECK(std::abs(ex.root) < 1e-10);
  auto clamped = wpcm::newton_solve([](double x) { return x - 20.0; }, 0.0, {-1, 1}, 1e-12, 5);
  CHECK(clamped.root == 1.0);
  CHECK_THROWS_AS(wpcm::newton_solve([](double) { return NAN; }, 0.0, {-1, 1}, 1e-8, 10),
                  wpcm::NumericError);
}

TEST_CASE("objective matches quadrature on a one-coefficient toy") {
  SplineBasisSpec spec;
  spec.lower = 0.0;
  spec.upper = 25.0;
  spec.order = 1;
  // Dimension 2 for order 1; the toy uses the intercept column only.
  const HyperParams h;
  PosteriorState prior = PosteriorState::diffuse(1);
  prior.u(0) = -0.5;
  prior.sigma_beta(0, 0) = 0.8;
  MatrixXd z(1, 1);
  z << 0.7;
  VectorXd y(1);
  y << 0.45;
  PosteriorState a = prior, b = prior;
  a.u(0) = -0.3;
  a.sigma_beta(0, 0) = 0.2;
  a.c = VectorXd::Constant(1, 1.2);
  a.d2 = VectorXd::Constant(1, 0.4);
  b.u(0) = -0.9;
  b.sigma_beta(0, 0) = 0.5;
  b.c = VectorXd::Constant(1, 0.3);
  b.d2 = VectorXd::Constant(1, 0.9);
  const double implemented = wpcm::elbo(a, z, y, prior, h) - wpcm::elbo(b, z, y, prior, h);
  const double quad = quadrature_elbo(a, prior, 0.7, 0.45, h) -
                      quadrature_elbo(b, prior, 0.7, 0.45, h);
  CHECK(implemented == doctest::Approx(quad).epsilon(1e-4));
  CHECK(wpcm::elbo(a, z, y, prior, h) == wpcm::elbo(a, z, y, prior, h));
}

TEST_CASE("coordinate ascent never lowers the objective") {
  const auto spec = small_spec();
  const HyperParams h;
  std::mt19937_64 rng(31);
  int violations = 0, strict = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto d = curve_data(60, 0.05, 100 + inst);
    const MatrixXd z = wpcm::design_matrix(d.speed, spec);
    const VectorXd y = Eigen::Map<const VectorXd>(d.power.data(), 60);
    const auto prior = PosteriorState::diffuse(spec.dimension());
    auto s = random_state(spec.dimension(), 60, rng);
    double j = wpcm::elbo(s, z, y, prior, h);
    for (int e = 0; e < 5; ++e) {
      s = wpcm::coordinate_ascent_epoch(s, z, y, prior, h);
      const double next = wpcm::elbo(s, z, y, prior, h);
      if (next < j - 1e-8) ++violations;
      if (e == 0 && next > j) ++strict;
      j = next;
    }
  }
  CHECK(violations == 0);
  CHECK(strict == 100);
}

TEST_CASE("converged fit satisfies the stationarity equations") {
  const auto spec = small_spec();
  const HyperParams h;
  const auto d = curve_data(300, 0.03, 5);
  const auto prior = PosteriorState::diffuse(spec.dimension());
  const auto fit = wpcm::fit_to_convergence(prior, d.speed, d.power, h, spec, 6000, 1e-7);
  CHECK(fit.converged);
  const MatrixXd z = wpcm::design_matrix(d.speed, spec);
  const VectorXd y = Eigen::Map<const VectorXd>(d.power.data(), 300);
  const auto r = wpcm::stationarity_residuals(fit.state, z, y, prior, h);
  CHECK(r.max_abs() < 1e-6);

  // A further epoch is a fixed point.
  const auto again = wpcm::coordinate_ascent_epoch(fit.state, z, y, prior, h);
  CHECK((again.u - fit.state.u).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((again.sigma_beta - fit.state.sigma_beta).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("noiseless monotone data are recovered") {
  const auto spec = SplineBasisSpec::power_curve_default();
  const HyperParams h;
  // Targets come from a known positive coefficient vector. Coefficients
  // near zero are pulled up by the prior, since each record's precision
  // cannot exceed (a0 + 1/2) / b0 in expectation.
  VectorXd beta(16);
  beta << 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.09, 0.08, 0.07, 0.06, 0.06, 0.05,
      0.04, 0.04;
  Data d;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> wind(0.0, 25.0);
  for (int i = 0; i < 1000; ++i) {
    d.speed.push_back(wind(rng));
    d.power.push_back(wpcm::basis_row(d.speed.back(), spec).dot(beta));
  }
  const auto fit = wpcm::fit_to_convergence(PosteriorState::diffuse(spec.dimension()),
                                            d.speed, d.power, h, spec, 800, 1e-7);
  std::vector<double> grid;
  for (int i = 0; i <= 250; ++i) grid.push_back(0.1 * i);
  const auto pred = wpcm::predict_power(fit.state, grid, spec, h);
  double ss = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double e =
        pred.mean(static_cast<Eigen::Index>(i)) - wpcm::basis_row(grid[i], spec).dot(beta);
    ss += e * e;
  }
  CHECK(std::sqrt(ss / grid.size()) < 1e-2);
  for (Eigen::Index i = 1; i < pred.mean.size(); ++i) CHECK(pred.mean(i) >= pred.mean(i - 1));
}

TEST_CASE("segment fits: empty data, zero epochs, low-speed data") {
  const auto spec = SplineBasisSpec::power_curve_default();
  HyperParams h;
  const auto d = curve_data(1000, 0.03, 12);
  const auto start = wpcm::fit_to_convergence(PosteriorState::diffuse(16), d.speed, d.power, h,
                                              spec, 300, 1e-7)
                         .state;

  const std::vector<double> none;
  const auto same = wpcm::fit_segment(start, none, none, h, spec);
  CHECK(same.u == start.u);
  CHECK(same.sigma_beta == start.sigma_beta);
  CHECK(same.c.size() == 0);
  CHECK(same.t == start.t + 1);

  const auto seg = curve_data(500, 0.03, 13);
  h.maxiter = 0;
  const auto untouched = wpcm::fit_segment(start, seg.speed, seg.power, h, spec);
  CHECK(untouched.u == start.u);
  CHECK(untouched.c.size() == 500);
  CHECK(untouched.c(0) == doctest::Approx(std::log(h.a0 / h.b0)));
  CHECK(untouched.d2(0) == 1.0);

  h.maxiter = 30;
  const auto low = curve_data(500, 0.03, 14, 0.0, 5.0);
  const auto after = wpcm::fit_segment(start, low.speed, low.power, h, spec);
  // Bases rising above 9 m/s (index >= 11) see no data.
  for (int j = 11; j < 16; ++j) {
    CHECK(std::abs(after.u(j) - start.u(j)) < std::sqrt(start.sigma_beta(j, j)));
  }
}

TEST_CASE("sequential updates track a stationary curve and a drop") {
  const auto spec = SplineBasisSpec::power_curve_default();
  const HyperParams h;
  const auto init = curve_data(1000, 0.03, 20);
  const auto start = wpcm::fit_to_convergence(PosteriorState::diffuse(16), init.speed,
                                              init.power, h, spec, 300, 1e-7)
                         .state;
  CHECK(wpcm::sequential_update({}, start, h, spec).trajectory.empty());

  wpcm::SegmentStream stream;
  for (std::size_t t = 0; t < 12; ++t) {
    const auto d = curve_data(500, 0.03, 200 + t, 0.0, 25.0, t < 6 ? 1.0 : 0.9);
    stream.push_back({t, t * 500, d.speed, d.power});
  }
  const auto seq = wpcm::sequential_update(stream, start, h, spec);
  REQUIRE(seq.trajectory.size() == 12);
  CHECK(seq.failures.empty());
  const std::vector<double> grid{6.0, 8.0, 10.0, 12.0};
  const auto before = wpcm::predict_power(seq.trajectory[5], grid, spec, h);
  const auto after = wpcm::predict_power(seq.trajectory[11], grid, spec, h);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    CHECK(std::abs(before.mean(k) - wpcm::true_curve(grid[i])) < 0.02);
    CHECK(after.mean(k) < 0.95 * before.mean(k));
  }

  const auto rerun = wpcm::sequential_update(stream, start, h, spec);
  CHECK(rerun.trajectory.back().u == seq.trajectory.back().u);
  CHECK(rerun.trajectory.back().sigma_beta == seq.trajectory.back().sigma_beta);
}

TEST_CASE("predictive mean matches Monte Carlo over the coefficients") {
  const auto spec = small_spec();
  std::mt19937_64 rng(41);
  auto s = random_state(spec.dimension(), 0, rng);
  const std::vector<double> xs{2.0, 6.5, 11.0, 20.0};
  const auto pred = wpcm::predict_power(s, xs, spec);
  const MatrixXd z = wpcm::design_matrix(xs, spec);
  const MatrixXd l = s.sigma_beta.llt().matrixL();
  std::normal_distribution<double> g(0.0, 1.0);
  const int draws = 100000;
  VectorXd sum = VectorXd::Zero(4), sum_sq = VectorXd::Zero(4);
  VectorXd e(spec.dimension());
  for (int i = 0; i < draws; ++i) {
    for (auto& x : e) x = g(rng);
    const VectorXd f = z * (s.u + l * e).array().exp().matrix();
    sum += f;
    sum_sq += f.cwiseProduct(f);
  }
  for (int k = 0; k < 4; ++k) {
    const double m = sum(k) / draws;
    const double se = std::sqrt((sum_sq(k) / draws - m * m) / draws);
    CHECK(std::abs(pred.mean(k) - m) < 3 * se);
  }

  auto tiny = PosteriorState::diffuse(spec.dimension());
  tiny.u.setConstant(-19.0);
  tiny.sigma_beta *= 1e-6;
  CHECK(wpcm::predict_power(tiny, xs, spec).mean.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("determinant is quadratic in one off-diagonal entry") {
  std::mt19937_64 rng(3);
  const auto spec = small_spec();
  const auto d = curve_data(40, 0.05, 2);
  const MatrixXd z = wpcm::design_matrix(d.speed, spec);
  const VectorXd y = Eigen::Map<const VectorXd>(d.power.data(), 40);
  const auto s = random_state(spec.dimension(), 40, rng);
  const auto ws = wpcm::make_workspace(s, z, y);
  for (auto [j, k] : {std::pair{0, 3}, std::pair{2, 5}, std::pair{1, 7}}) {
    for (double v : {-0.02, 0.0, 0.03}) {
      MatrixXd m = s.sigma_beta;
      m(j, k) = m(k, j) = v;
      CHECK(m.determinant() ==
            doctest::Approx(ws.a1(j, k) * v * v + ws.a2(j, k) * v + ws.a3(j, k)).epsilon(1e-9));
    }
  }
}

TEST_CASE("posterior checkpoint round trip") {
  std::mt19937_64 rng(8);
  auto s = random_state(5, 3, rng);
  s.t = 7;
  const auto j = wpcm::posterior_to_json(s);
  CHECK(j["sigma_offdiag"].size() == 10);
  const auto back = wpcm::posterior_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.t == 7);
  CHECK(back.u == s.u);
  CHECK(back.sigma_beta == s.sigma_beta);
  CHECK(back.c == s.c);
  CHECK(back.d2 == s.d2);
  auto broken = j;
  broken.erase("u");
  CHECK_THROWS_AS(wpcm::posterior_from_json(broken), wpcm::FormatError);
}
