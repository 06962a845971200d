#include "wpcm/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wpcm/errors.hpp"

namespace wpcm {

namespace {

// Index l (1-based) of the knot interval [t_l, t_{l+1}) holding x. The
// upper boundary belongs to the last nondegenerate interval.
int locate_interval(const std::vector<double>& t, int order, double x) {
  const int n = static_cast<int>(t.size());
  const int last = n - (order + 1);
  if (x >= t[last]) {
    return last;
  }
  auto it = std::upper_bound(t.begin(), t.end(), x);
  return static_cast<int>(it - t.begin());
}

void check_x(double x, const SplineBasisSpec& spec) {
  if (!(x >= spec.lower && x <= spec.upper)) {
    std::ostringstream msg;
    msg << "wind speed " << x << " outside spline boundary [" << spec.lower
        << ", " << spec.upper << "]";
    throw DomainError(msg.str());
  }
}

double m_spline_rec(const std::vector<double>& t, int l, int j, int p,
                    double x) {
  const double tj = t[j - 1];
  const double tjp = t[j + p - 1];
  if (p == 1) {
    return (j == l && tjp > tj) ? 1.0 / (tjp - tj) : 0.0;
  }
  if (!(tjp > tj)) {
    return 0.0;
  }
  const double left = (x - tj) * m_spline_rec(t, l, j, p - 1, x);
  const double right = (tjp - x) * m_spline_rec(t, l, j + 1, p - 1, x);
  return p * (left + right) / ((p - 1) * (tjp - tj));
}

// All M_m^q(x), m = 1..n-q, for q = 1..max_order; returns the top row.
std::vector<double> m_spline_table(const std::vector<double>& t, int l,
                                   int max_order, double x) {
  const int n = static_cast<int>(t.size());
  std::vector<double> m(n - 1, 0.0);
  if (t[l] > t[l - 1]) {
    m[l - 1] = 1.0 / (t[l] - t[l - 1]);
  }
  for (int q = 2; q <= max_order; ++q) {
    std::vector<double> next(n - q, 0.0);
    for (int j = 1; j <= n - q; ++j) {
      const double tj = t[j - 1];
      const double tjq = t[j + q - 1];
      if (!(tjq > tj)) {
        continue;
      }
      next[j - 1] = q * ((x - tj) * m[j - 1] + (tjq - x) * m[j]) /
                    ((q - 1) * (tjq - tj));
    }
    m = std::move(next);
  }
  return m;
}

}  // namespace

SplineBasisSpec SplineBasisSpec::power_curve_default() {
  SplineBasisSpec spec;
  for (int v = 3; v <= 14; ++v) {
    spec.interior_knots.push_back(static_cast<double>(v));
  }
  spec.lower = 0.0;
  spec.upper = 25.0;
  spec.order = 3;
  return spec;
}

void SplineBasisSpec::validate() const {
  if (order < 1) {
    throw ConfigError("spline order must be >= 1");
  }
  if (!(lower < upper)) {
    throw ConfigError("spline boundary requires lower < upper");
  }
  for (std::size_t i = 0; i < interior_knots.size(); ++i) {
    const double k = interior_knots[i];
    if (k < lower || k > upper) {
      throw ConfigError("interior knot outside spline boundary");
    }
    if (i > 0 && !(k > interior_knots[i - 1])) {
      throw ConfigError("interior knots must be strictly increasing");
    }
  }
}

std::vector<double> SplineBasisSpec::augmented_knots() const {
  std::vector<double> t;
  t.reserve(interior_knots.size() + 2 * (order + 1));
  t.insert(t.end(), order + 1, lower);
  t.insert(t.end(), interior_knots.begin(), interior_knots.end());
  t.insert(t.end(), order + 1, upper);
  return t;
}

double m_spline(int j, int p, double x, const SplineBasisSpec& spec) {
  const auto t = spec.augmented_knots();
  const int n = static_cast<int>(t.size());
  if (p < 1 || j < 1 || j > n - p) {
    throw DomainError("M-spline index out of range");
  }
  check_x(x, spec);
  const int l = locate_interval(t, spec.order, x);
  return m_spline_rec(t, l, j, p, x);
}

double i_spline(int j, int p, double x, const SplineBasisSpec& spec) {
  const auto t = spec.augmented_knots();
  const int n = static_cast<int>(t.size());
  if (p < 1 || p > spec.order || j < 1 || j > n - p - 1) {
    throw DomainError("I-spline index out of range");
  }
  check_x(x, spec);
  const int l = locate_interval(t, spec.order, x);
  if (j > l) {
    return 0.0;
  }
  if (j < l - p + 1) {
    return 1.0;
  }
  double sum = 0.0;
  for (int m = j; m <= l; ++m) {
    sum += (t[m + p] - t[m - 1]) * m_spline_rec(t, l, m, p + 1, x) / (p + 1);
  }
  return sum;
}

Eigen::RowVectorXd basis_row(double x, const SplineBasisSpec& spec) {
  check_x(x, spec);
  const auto t = spec.augmented_knots();
  const int p = spec.order;
  const int dim = spec.dimension();
  const int l = locate_interval(t, p, x);
  const auto m = m_spline_table(t, l, p + 1, x);

  Eigen::RowVectorXd row(dim);
  for (int j = 1; j <= dim; ++j) {
    if (j > l) {
      row(j - 1) = 0.0;
    } else if (j < l - p + 1) {
      row(j - 1) = 1.0;
    } else {
      double sum = 0.0;
      for (int mm = j; mm <= l; ++mm) {
        sum += (t[mm + p] - t[mm - 1]) * m[mm - 1] / (p + 1);
      }
      row(j - 1) = std::clamp(sum, 0.0, 1.0);
    }
  }
  return row;
}

Eigen::MatrixXd design_matrix(std::span<const double> xs,
                              const SplineBasisSpec& spec) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(xs.size()), spec.dimension());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    z.row(static_cast<Eigen::Index>(i)) = basis_row(xs[i], spec);
  }
  return z;
}

}  // namespace wpcm
