#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wpcm/copula.hpp"
#include "wpcm/errors.hpp"
#include "wpcm/normal.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using wpcm::GaussianCopula;
using wpcm::LogNormalMarginal;

namespace {

// Bivariate normal CDF by one-dimensional quadrature of
// phi(x) Phi((b - rho x) / sqrt(1 - rho^2)) over (-inf, a].
double bvn_cdf(double a, double b, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  return oracle::integrate(
      [&](double x) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI) *
               oracle::std_normal_cdf((b - rho * x) / s);
      },
      -12.0, a, 800);
}

double quantile_by_bisection(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle::std_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double mvn_logpdf(const VectorXd& x, const VectorXd& m, const MatrixXd& s) {
  Eigen::LLT<MatrixXd> llt(s);
  const VectorXd r = llt.matrixL().solve(x - m);
  return -0.5 * r.squaredNorm() -
         llt.matrixLLT().diagonal().array().log().sum() -
         0.5 * x.size() * std::log(2.0 * M_PI);
}

MatrixXd random_spd(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd a(k, k);
  for (auto& v : a.reshaped()) v = n(rng);
  return a * a.transpose() / k + 0.5 * MatrixXd::Identity(k, k);
}

MatrixXd correlation(std::initializer_list<double> upper, int k) {
  MatrixXd r = MatrixXd::Identity(k, k);
  auto it = upper.begin();
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) r(i, j) = r(j, i) = *it++;
  return r;
}

// KL between the log-scale Gaussians implied by copula + log-normal
// marginals, computed directly.
double analytic_total_kl(const wpcm::CopulaModel& q, const wpcm::CopulaModel& p) {
  const int k = q.copula.dim();
  VectorXd mq(k), mp(k), dq(k), dp(k);
  for (int i = 0; i < k; ++i) {
    mq(i) = q.marginals[i].u;
    mp(i) = p.marginals[i].u;
    dq(i) = std::sqrt(q.marginals[i].sigma2);
    dp(i) = std::sqrt(p.marginals[i].sigma2);
  }
  const MatrixXd sq = dq.asDiagonal() * q.copula.sigma * dq.asDiagonal();
  const MatrixXd sp = dp.asDiagonal() * p.copula.sigma * dp.asDiagonal();
  const MatrixXd spi = sp.inverse();
  return 0.5 * ((spi * sq).trace() + (mq - mp).dot(spi * (mq - mp)) - k +
                std::log(sp.determinant() / sq.determinant()));
}

double analytic_marginal_kl(const wpcm::CopulaModel& q, const wpcm::CopulaModel& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.marginals.size(); ++i) {
    const auto& a = q.marginals[i];
    const auto& b = p.marginals[i];
    s += 0.5 * (a.sigma2 / b.sigma2 + (a.u - b.u) * (a.u - b.u) / b.sigma2 - 1.0 +
                std::log(b.sigma2 / a.sigma2));
  }
  return s;
}

}  // namespace

TEST_CASE("normal quantile inverts the CDF") {
  for (double p : {1e-12, 1e-6, 0.01, 0.2, 0.5, 0.77, 0.99, 0.999999}) {
    CHECK(std::abs(wpcm::normal_quantile(p) - quantile_by_bisection(p)) < 1e-9);
  }
  CHECK_THROWS_AS(wpcm::normal_quantile(0.0), wpcm::DomainError);
  CHECK_THROWS_AS(wpcm::normal_quantile(1.0), wpcm::DomainError);
}

TEST_CASE("independence copula density is one") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int dim : {1, 2, 5}) {
    const auto c = GaussianCopula::independence(dim);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x(dim);
      for (auto& v : x) v = u(rng);
      CHECK(std::abs(wpcm::gaussian_copula_density(x, c) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("bivariate copula density at the medians") {
  const std::vector<double> x{0.5, 0.5};
  CHECK(wpcm::gaussian_copula_density(x, GaussianCopula::bivariate(0.5)) ==
        doctest::Approx(1.0 / std::sqrt(0.75)).epsilon(1e-12));
  const std::vector<double> edge{0.0, 0.5};
  CHECK_THROWS_AS(wpcm::gaussian_copula_density(edge, GaussianCopula::bivariate(0.5)),
                  wpcm::DomainError);
}

TEST_CASE("copula density is the mixed partial of the copula CDF") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::uniform_real_distribution<double> r(-0.8, 0.8);
  for (int t = 0; t < 5; ++t) {
    const double rho = r(rng);
    const double u1 = u(rng), u2 = u(rng);
    const double h = 1e-3;
    auto cdf = [&](double a, double b) {
      return bvn_cdf(quantile_by_bisection(a), quantile_by_bisection(b), rho);
    };
    const double fd = (cdf(u1 + h, u2 + h) - cdf(u1 + h, u2 - h) -
                       cdf(u1 - h, u2 + h) + cdf(u1 - h, u2 - h)) /
                      (4 * h * h);
    const std::vector<double> x{u1, u2};
    CHECK(wpcm::gaussian_copula_density(x, GaussianCopula::bivariate(rho)) ==
          doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("Sklar joint density reduces to the marginals") {
  const std::vector<LogNormalMarginal> m{{0.2, 0.5}, {-0.4, 1.3}, {1.0, 0.1}};
  const std::vector<double> theta{1.1, 0.4, 2.9};
  const double product = m[0].pdf(theta[0]) * m[1].pdf(theta[1]) * m[2].pdf(theta[2]);
  CHECK(wpcm::sklar_joint_pdf(GaussianCopula::independence(3), m, theta) ==
        doctest::Approx(product).epsilon(1e-12));
  const std::vector<LogNormalMarginal> one{{0.3, 0.7}};
  const std::vector<double> t1{1.7};
  CHECK(wpcm::sklar_joint_pdf(GaussianCopula::independence(1), one, t1) ==
        doctest::Approx(one[0].pdf(1.7)).epsilon(1e-12));
  const std::vector<double> bad{1.0, -1.0, 1.0};
  CHECK_THROWS_AS(wpcm::sklar_joint_pdf(GaussianCopula::independence(3), m, bad),
                  wpcm::DomainError);
}

TEST_CASE("bivariate Sklar density integrates to one") {
  const std::vector<LogNormalMarginal> m{{0.1, 0.3}, {-0.2, 0.6}};
  const auto c = GaussianCopula::bivariate(0.3);
  // Integrate in log coordinates; the Jacobian is theta_1 theta_2.
  const double s1 = std::sqrt(m[0].sigma2), s2 = std::sqrt(m[1].sigma2);
  const double total = oracle::integrate(
      [&](double x) {
        return oracle::integrate(
            [&](double y) {
              const std::vector<double> th{std::exp(x), std::exp(y)};
              return wpcm::sklar_joint_pdf(c, m, th) * th[0] * th[1];
            },
            m[1].u - 9 * s2, m[1].u + 9 * s2, 60);
      },
      m[0].u - 9 * s1, m[0].u + 9 * s1, 60);
  CHECK(std::abs(total - 1.0) < 1e-3);
}

TEST_CASE("Gaussian KL closed form") {
  const VectorXd m = VectorXd::Constant(3, 0.4);
  const MatrixXd s = MatrixXd::Identity(3, 3) * 0.7;
  CHECK(wpcm::kl_mvn(m, s, m, s) == doctest::Approx(0.0));
  CHECK(wpcm::kl_mvn(VectorXd::Zero(1), MatrixXd::Ones(1, 1), VectorXd::Ones(1),
                     MatrixXd::Ones(1, 1)) == doctest::Approx(0.5));
  CHECK_THROWS_AS(wpcm::kl_mvn(m, s, m, MatrixXd::Zero(3, 3)), wpcm::NumericError);
}

TEST_CASE("Gaussian KL matches a Monte Carlo estimate") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  const MatrixXd s1 = random_spd(3, rng), s2 = random_spd(3, rng);
  const VectorXd m1 = VectorXd::Random(3), m2 = VectorXd::Random(3);
  const MatrixXd l1 = s1.llt().matrixL();
  const int draws = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  VectorXd e(3);
  for (int i = 0; i < draws; ++i) {
    for (auto& v : e) v = n(rng);
    const VectorXd x = m1 + l1 * e;
    const double d = mvn_logpdf(x, m1, s1) - mvn_logpdf(x, m2, s2);
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
  CHECK(std::abs(wpcm::kl_mvn(m1, s1, m2, s2) - mean) < 3 * se);
}

TEST_CASE("KL decomposition into copula and marginal terms") {
  const std::size_t n = 100000;
  SUBCASE("identical models") {
    wpcm::CopulaModel q{GaussianCopula{correlation({0.4}, 2)}, {{0.1, 0.5}, {0.3, 0.2}}};
    const auto d = wpcm::kl_decomposition_check(q, q, n, 1);
    CHECK(std::abs(d.total.mean) < 1e-12);
    CHECK(std::abs(d.copula.mean) < 1e-12);
    CHECK(std::abs(d.marginal_sum.mean) < 1e-12);
  }
  for (int dim : {2, 3}) {
    CAPTURE(dim);
    const auto rq = dim == 2 ? correlation({0.5}, 2) : correlation({0.5, -0.2, 0.3}, 3);
    const auto rp = dim == 2 ? correlation({-0.1}, 2) : correlation({0.1, 0.2, -0.4}, 3);
    std::vector<LogNormalMarginal> mq{{0.1, 0.5}, {0.3, 0.2}, {-0.5, 1.1}};
    std::vector<LogNormalMarginal> mp{{0.4, 0.8}, {0.0, 0.3}, {-0.2, 0.6}};
    mq.resize(dim);
    mp.resize(dim);
    SUBCASE("same copula, different marginals") {
      wpcm::CopulaModel q{GaussianCopula{rq}, mq}, p{GaussianCopula{rq}, mp};
      const auto d = wpcm::kl_decomposition_check(q, p, n, 5);
      const double total = analytic_total_kl(q, p);
      const double marg = analytic_marginal_kl(q, p);
      CHECK(std::abs(d.total.mean - total) < 3 * d.total.std_error);
      CHECK(std::abs(d.marginal_sum.mean - marg) < 3 * d.marginal_sum.std_error);
      CHECK(std::abs(d.copula.mean - (total - marg)) < 3 * d.copula.std_error);
      CHECK(d.total.mean == doctest::Approx(d.copula.mean + d.marginal_sum.mean));
    }
    SUBCASE("same marginals, different correlations") {
      wpcm::CopulaModel q{GaussianCopula{rq}, mq}, p{GaussianCopula{rp}, mq};
      const auto d = wpcm::kl_decomposition_check(q, p, n, 6);
      const double total = analytic_total_kl(q, p);
      CHECK(std::abs(d.marginal_sum.mean) < 1e-12);
      CHECK(std::abs(d.copula.mean - total) < 3 * d.copula.std_error);
      CHECK(std::abs(d.total.mean - total) < 3 * d.total.std_error);
    }
  }
}

TEST_CASE("reparameterisation transform") {
  wpcm::ExpandedGaussian g{VectorXd(2), VectorXd(2), correlation({0.6}, 2)};
  g.mu << 0.3, -1.0;
  g.scale << 2.0, 0.5;
  const std::vector<LogNormalMarginal> m{{0.7, 0.4}, {-0.2, 1.5}};

  const VectorXd at_mu = wpcm::reparam_transform(g.mu, g, m);
  CHECK(at_mu(0) == doctest::Approx(std::exp(0.7)));
  CHECK(at_mu(1) == doctest::Approx(std::exp(-0.2)));

  double prev = 0.0;
  for (double z = -6.0; z <= 6.0; z += 0.25) {
    VectorXd x = g.mu;
    x(0) = z;
    const double th = wpcm::reparam_transform(x, g, m)(0);
    CHECK(th > prev);
    prev = th;
    CHECK(wpcm::reparam_inverse(wpcm::reparam_transform(x, g, m), g, m)(0) ==
          doctest::Approx(z).epsilon(1e-8));
  }

  // Push-forward marginals against the log-normal CDF (KS at the 0.1% level).
  const int draws = 100000;
  const MatrixXd l = g.covariance().llt().matrixL();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a, b;
  VectorXd e(2);
  for (int i = 0; i < draws; ++i) {
    for (auto& v : e) v = n(rng);
    const VectorXd th = wpcm::reparam_transform(g.mu + l * e, g, m);
    a.push_back(th(0));
    b.push_back(th(1));
  }
  for (int k = 0; k < 2; ++k) {
    auto& s = k == 0 ? a : b;
    std::sort(s.begin(), s.end());
    double ks = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double f = oracle::std_normal_cdf((std::log(s[i]) - m[k].u) / std::sqrt(m[k].sigma2));
      ks = std::max({ks, std::abs(f - double(i) / draws), std::abs(f - double(i + 1) / draws)});
    }
    CHECK(ks < 1.95 / std::sqrt(double(draws)));
  }
}

TEST_CASE("reparameterised ELBO on a conjugate toy") {
  // log theta ~ N(0, 1), x | theta ~ N(log theta, 1), observed x = 0.8.
  // Posterior: log theta ~ N(0.4, 0.5); evidence N(x; 0, 2).
  const double x = 0.8;
  const auto log_joint = [&](const VectorXd& th) {
    const double l = std::log(th(0));
    return -0.5 * l * l - 0.5 * std::log(2 * M_PI) - l - 0.5 * (x - l) * (x - l) -
           0.5 * std::log(2 * M_PI);
  };
  const double log_evidence = -0.25 * x * x - 0.5 * std::log(4 * M_PI);
  wpcm::ExpandedGaussian g{VectorXd::Constant(1, 0.0), VectorXd::Constant(1, 1.0),
                           MatrixXd::Identity(1, 1)};

  const std::vector<LogNormalMarginal> exact{{0.4, 0.5}};
  const auto e = wpcm::reparam_elbo_estimate(log_joint, g, exact, 2000, 1);
  CHECK(e.value == doctest::Approx(log_evidence).epsilon(1e-10));

  const std::vector<LogNormalMarginal> off{{0.3, 0.6}};
  const auto o = wpcm::reparam_elbo_estimate(log_joint, g, off, 800000, 2);
  CHECK(o.value < log_evidence + 3 * o.std_error);

  // Entropy form by quadrature over log theta.
  const auto& q = off[0];
  const double s = std::sqrt(q.sigma2);
  const double quad = oracle::integrate(
      [&](double l) {
        const double th = std::exp(l);
        const VectorXd v = VectorXd::Constant(1, th);
        const double dens = std::exp(q.log_pdf(th)) * th;
        return dens * (log_joint(v) - q.log_pdf(th));
      },
      q.u - 12 * s, q.u + 12 * s, 400);
  CHECK(o.std_error < 3e-4);
  CHECK(std::abs(o.value - quad) < 1e-3);
}

TEST_CASE("decreasing map carries the sign prefactor") {
  const auto log_joint = [](const VectorXd& th) {
    const double l = std::log(th(0));
    return -0.5 * l * l;
  };
  wpcm::MonotoneMap up{[](const VectorXd& z) { return VectorXd(z.array().exp()); },
                       [](const VectorXd& z) { return VectorXd(z.array().exp()); },
                       wpcm::Monotonicity::kIncreasing};
  wpcm::MonotoneMap down{[](const VectorXd& z) { return VectorXd((-z.array()).exp()); },
                         [](const VectorXd& z) { return VectorXd(-(-z.array()).exp()); },
                         wpcm::Monotonicity::kDecreasing};
  const VectorXd m = VectorXd::Zero(1);
  const MatrixXd c = MatrixXd::Identity(1, 1);
  const auto a = wpcm::reparam_elbo_generic(log_joint, m, c, up, 50000, 4);
  const auto b = wpcm::reparam_elbo_generic(log_joint, m, c, down, 50000, 4);
  // The standard normal is symmetric, so |h'| gives the same integrand in
  // distribution; only the prefactor flips the sign.
  CHECK(std::abs(b.value + a.value) < 3 * std::hypot(a.std_error, b.std_error));
}
