#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// Composite Gauss-Legendre (5 nodes) on n equal panels of [a, b].
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, int n = 200) {
  static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831,
                              -0.9061798459386640, 0.9061798459386640};
  static const double w[5] = {0.5688888888888889, 0.4786286704993665,
                              0.4786286704993665, 0.2369268850561891,
                              0.2369268850561891};
  const double h = (b - a) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mid = a + (i + 0.5) * h;
    for (int k = 0; k < 5; ++k) s += w[k] * f(mid + 0.5 * h * x[k]);
  }
  return 0.5 * h * s;
}

// Sum of panel integrals between consecutive breakpoints inside [a, b].
inline double integrate_pieces(const std::function<double(double)>& f,
                               const std::vector<double>& breaks, double a,
                               double b, int n = 4) {
  double s = 0.0;
  double lo = a;
  for (double k : breaks) {
    if (k <= lo || k >= b) continue;
    s += integrate(f, lo, k, n);
    lo = k;
  }
  return s + integrate(f, lo, b, n);
}

inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace oracle
