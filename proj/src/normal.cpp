#include "wpcm/normal.hpp"

#include <cmath>
#include <limits>

#include "wpcm/errors.hpp"

namespace wpcm {

double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal quantile requires p in (0, 1)");
  }
  // Acklam's rational approximation (relative error ~1e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement against the erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double LogNormalMarginal::log_pdf(double theta) const {
  if (!(theta > 0.0)) {
    return -std::numeric_limits<double>::infinity();
  }
  const double lt = std::log(theta);
  const double dz = lt - u;
  return -lt - 0.5 * std::log(sigma2) - kLogSqrt2Pi - 0.5 * dz * dz / sigma2;
}

double LogNormalMarginal::pdf(double theta) const {
  return theta > 0.0 ? std::exp(log_pdf(theta)) : 0.0;
}

double LogNormalMarginal::cdf(double theta) const {
  if (!(theta > 0.0)) {
    return 0.0;
  }
  return normal_cdf((std::log(theta) - u) / std::sqrt(sigma2));
}

double LogNormalMarginal::quantile(double p) const {
  return std::exp(u + std::sqrt(sigma2) * normal_quantile(p));
}

double LogNormalMarginal::mean() const { return std::exp(u + 0.5 * sigma2); }

double LogNormalMarginal::median() const { return std::exp(u); }

double kl_lognormal(const LogNormalMarginal& a, const LogNormalMarginal& b) {
  const double du = a.u - b.u;
  return 0.5 * (a.sigma2 / b.sigma2 + du * du / b.sigma2 - 1.0 +
                std::log(b.sigma2 / a.sigma2));
}

}  // namespace wpcm
