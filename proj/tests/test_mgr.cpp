#include <doctest.h>

#include <cmath>
#include <random>

#include "wpcm/mgr.hpp"
#include "wpcm/synth.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using wpcm::HyperParams;
using wpcm::MgrPosterior;

namespace {

struct Problem {
  MatrixXd z;
  VectorXd y;
};

Problem curve_problem(int n, std::uint64_t seed, const wpcm::SplineBasisSpec& spec) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> v(0.0, 25.0);
  std::normal_distribution<double> e(0.0, 0.05);
  std::vector<double> speed;
  Problem p;
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    speed.push_back(v(rng));
    p.y(i) = wpcm::true_curve(speed.back()) + e(rng);
  }
  p.z = wpcm::design_matrix(speed, spec);
  return p;
}

wpcm::SplineBasisSpec small_spec() {
  wpcm::SplineBasisSpec s;
  s.interior_knots = {5.0, 10.0, 15.0};
  s.lower = 0.0;
  s.upper = 25.0;
  s.order = 2;
  return s;
}

}  // namespace

TEST_CASE("scalar toy and no-data fits") {
  HyperParams h;  // a0 / b0 = 1 gives unit starting precision
  MgrPosterior prior;
  prior.mu_beta = VectorXd::Zero(1);
  prior.sigma_beta = MatrixXd::Identity(1, 1);
  const MatrixXd z = MatrixXd::Ones(1, 1);
  const VectorXd y = VectorXd::Ones(1);
  const auto q = wpcm::mgr_fit(prior, z, y, h, 1);
  CHECK(q.sigma_beta(0, 0) == doctest::Approx(0.5));
  CHECK(q.mu_beta(0) == doctest::Approx(0.5));
  CHECK(q.a(0) == doctest::Approx(h.a0 + 0.5));
  CHECK(q.t == 1);

  const auto none = wpcm::mgr_fit(prior, MatrixXd(0, 1), VectorXd(0), h, 30);
  CHECK(none.sigma_beta == prior.sigma_beta);
  CHECK(none.mu_beta == prior.mu_beta);
  CHECK(none.a.size() == 0);
}

TEST_CASE("closed forms solve the stationarity equations") {
  const auto spec = small_spec();
  const HyperParams h;
  const auto prob = curve_problem(200, 3, spec);
  const auto prior = MgrPosterior::diffuse(spec.dimension());
  const auto q = wpcm::mgr_fit(prior, prob.z, prob.y, h, 400);
  for (Eigen::Index i = 0; i < q.a.size(); ++i) CHECK(q.a(i) == h.a0 + 0.5);
  CHECK(wpcm::mgr_stationarity(q, prior, prob.z, prob.y, h).max_abs() < 1e-8);
  CHECK(wpcm::mgr_elbo(q, prior, prob.z, prob.y, h) ==
        wpcm::mgr_elbo(q, prior, prob.z, prob.y, h));

  // Objective rises over sweeps.
  double last = -INFINITY;
  for (int s = 1; s <= 10; ++s) {
    const double j = wpcm::mgr_elbo(wpcm::mgr_fit(prior, prob.z, prob.y, h, s), prior, prob.z,
                                    prob.y, h);
    CHECK(j >= last - 1e-8);
    last = j;
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  const auto spec = small_spec();
  const HyperParams h;
  const auto prob = curve_problem(30, 4, spec);
  const auto prior = MgrPosterior::diffuse(spec.dimension());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 1.5);

  for (bool at_solution : {true, false}) {
    auto q = wpcm::mgr_fit(prior, prob.z, prob.y, h, 400);
    if (!at_solution) {
      q.mu_beta = q.mu_beta.unaryExpr([&](double x) { return x * u(rng); });
      q.sigma_beta *= 0.7;
      q.a = q.a.unaryExpr([&](double x) { return x * u(rng); });
      q.b = q.b.unaryExpr([&](double x) { return x * u(rng); });
    }
    const auto g = wpcm::mgr_stationarity(q, prior, prob.z, prob.y, h);
    auto objective = [&](const MgrPosterior& x) {
      return wpcm::mgr_elbo(x, prior, prob.z, prob.y, h);
    };
    const double step = 1e-6;
    double worst = 0.0;
    for (int j = 0; j < q.dim(); ++j) {
      auto hi = q, lo = q;
      hi.mu_beta(j) += step;
      lo.mu_beta(j) -= step;
      worst = std::max(worst, std::abs((objective(hi) - objective(lo)) / (2 * step) - g.mu(j)));
      for (int k = 0; k <= j; ++k) {
        auto sh = q, sl = q;
        sh.sigma_beta(j, k) += step;
        sl.sigma_beta(j, k) -= step;
        double analytic = g.sigma(j, k);
        if (j != k) {
          sh.sigma_beta(k, j) += step;
          sl.sigma_beta(k, j) -= step;
          analytic += g.sigma(k, j);
        }
        worst = std::max(worst, std::abs((objective(sh) - objective(sl)) / (2 * step) - analytic));
      }
    }
    for (int i = 0; i < 30; ++i) {
      auto ah = q, al = q, bh = q, bl = q;
      ah.a(i) += step;
      al.a(i) -= step;
      bh.b(i) += step;
      bl.b(i) -= step;
      worst = std::max(worst, std::abs((objective(ah) - objective(al)) / (2 * step) - g.a(i)));
      worst = std::max(worst, std::abs((objective(bh) - objective(bl)) / (2 * step) - g.b(i)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("sequential updates only add precision") {
  const auto spec = wpcm::SplineBasisSpec::power_curve_default();
  const HyperParams h;
  const auto data = wpcm::generate_scada(wpcm::DegradationScenario{}, 6, 250, 11);
  const auto stream = wpcm::segment(data.records, wpcm::WindowSpec{250, 250});
  const auto traj = wpcm::mgr_sequential(stream, MgrPosterior::diffuse(16), h, spec);
  REQUIRE(traj.size() == stream.size());
  MgrPosterior prev = MgrPosterior::diffuse(16);
  for (const auto& q : traj) {
    CHECK(wpcm::precision_gain_min_eigenvalue(prev.sigma_beta, q.sigma_beta) > -1e-8);
    for (int j = 0; j < 16; ++j) CHECK(q.sigma_beta(j, j) <= prev.sigma_beta(j, j) + 1e-12);
    prev = q;
  }
  const auto back = wpcm::mgr_from_json(nlohmann::json::parse(wpcm::mgr_to_json(prev).dump()));
  CHECK(back.mu_beta == prev.mu_beta);
  CHECK(back.sigma_beta == prev.sigma_beta);
  CHECK(back.b == prev.b);
}
