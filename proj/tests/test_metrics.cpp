#include <doctest.h>

#include <cmath>
#include <random>

#include "wpcm/errors.hpp"
#include "wpcm/metrics.hpp"

TEST_CASE("fit scores") {
  const std::vector<double> a{0.1, 0.5, 0.9};
  const auto same = wpcm::fit_score(a, a);
  CHECK(same.rmse == 0.0);
  CHECK(same.mae == 0.0);
  CHECK(same.mape == 0.0);

  const std::vector<double> zero{0.0}, three{3.0};
  const auto s = wpcm::fit_score(zero, three);
  CHECK(s.rmse == 3.0);
  CHECK(s.mae == 3.0);
  CHECK(s.mape == 1.0);

  const auto skip = wpcm::fit_score(three, zero);
  CHECK(skip.mape_count == 0);

  CHECK_THROWS_AS(wpcm::fit_score(a, three), wpcm::DomainError);
  CHECK_THROWS_AS(wpcm::fit_score({}, {}), wpcm::DomainError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(37), y(37);
    for (int i = 0; i < 37; ++i) {
      p[i] = u(rng);
      y[i] = i % 9 == 0 ? 0.0 : u(rng);
    }
    double sq = 0, ab = 0, pct = 0;
    int n = 0;
    for (int i = 0; i < 37; ++i) {
      sq += (p[i] - y[i]) * (p[i] - y[i]);
      ab += std::abs(p[i] - y[i]);
      if (y[i] != 0.0) {
        pct += std::abs((p[i] - y[i]) / y[i]);
        ++n;
      }
    }
    const auto f = wpcm::fit_score(p, y);
    CHECK(f.rmse == doctest::Approx(std::sqrt(sq / 37)).epsilon(1e-12));
    CHECK(f.mae == doctest::Approx(ab / 37).epsilon(1e-12));
    CHECK(f.mape == doctest::Approx(pct / n).epsilon(1e-12));
    CHECK(f.mape_count == static_cast<std::size_t>(n));
    CHECK(f.rmse >= f.mae);
  }
}

TEST_CASE("detection scores") {
  const std::vector<bool> truth{false, false, true, true, true};
  const auto perfect = wpcm::detection_score(truth, truth);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto silent = wpcm::detection_score({false, false, false, false, false}, truth);
  CHECK(silent.recall == 0.0);
  CHECK(silent.f1 == 0.0);
  CHECK(silent.precision_undefined);

  const auto no_change = wpcm::detection_score({false, true}, {false, false});
  CHECK(no_change.recall_undefined);
  CHECK(no_change.fp == 1);

  // 11 of 13 degraded segments caught with no false alarms.
  std::vector<bool> t(20, false), a(20, false);
  for (int i = 7; i < 20; ++i) t[i] = true;
  for (int i = 9; i < 20; ++i) a[i] = true;
  const auto s = wpcm::detection_score(a, t);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == doctest::Approx(0.846).epsilon(1e-3));
  CHECK(s.f1 == doctest::Approx(0.917).epsilon(1e-3));

  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<bool> x(25), y(25);
    for (int i = 0; i < 25; ++i) {
      x[i] = coin(rng);
      y[i] = coin(rng);
    }
    const auto base = wpcm::detection_score(x, y);
    std::vector<int> perm(25);
    for (int i = 0; i < 25; ++i) perm[i] = (i * 7 + 3) % 25;
    std::vector<bool> px(25), py(25);
    for (int i = 0; i < 25; ++i) {
      px[i] = x[perm[i]];
      py[i] = y[perm[i]];
    }
    const auto moved = wpcm::detection_score(px, py);
    CHECK(moved.f1 == base.f1);
    CHECK(base.tp + base.fp + base.fn + base.tn == 25);
  }
  CHECK_THROWS_AS(wpcm::detection_score({true}, {true, false}), wpcm::DomainError);
}
