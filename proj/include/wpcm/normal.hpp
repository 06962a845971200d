#pragma once

namespace wpcm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_pdf(double z);
double normal_cdf(double z);

// Standard-normal quantile. Rational approximation refined by one Halley
// step; absolute error well below 1e-9 on (0, 1). Throws DomainError at 0, 1
// or outside the open interval.
double normal_quantile(double p);

// Log-normal marginal: log(theta) ~ N(u, sigma2).
struct LogNormalMarginal {
  double u = 0.0;
  double sigma2 = 1.0;

  double pdf(double theta) const;
  double log_pdf(double theta) const;
  double cdf(double theta) const;
  double quantile(double p) const;
  double mean() const;
  double median() const;
};

// KL(LN(a) || LN(b)); equals the Gaussian KL of the log-scale parameters.
double kl_lognormal(const LogNormalMarginal& a, const LogNormalMarginal& b);

}  // namespace wpcm
