#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace wpcm {

// Knot layout of an I-spline basis on [lower, upper].
//
// The augmented knot sequence t_1..t_n replicates each boundary `order + 1`
// times around the interior knots, so K interior knots give K + order + 1
// basis functions. The first basis function is constant (its M-spline
// support collapses onto `lower`), which acts as a nonnegative intercept.
struct SplineBasisSpec {
  std::vector<double> interior_knots;
  double lower = 0.0;
  double upper = 25.0;
  int order = 3;

  // Interior knots 3, 4, ..., 14 m/s on [0, 25] m/s, order 3.
  static SplineBasisSpec power_curve_default();

  // Throws ConfigError when knots are not strictly increasing, lie outside
  // [lower, upper], or order < 1.
  void validate() const;

  int dimension() const {
    return static_cast<int>(interior_knots.size()) + order + 1;
  }

  // 1-based in the accessors below; element 0 is t_1.
  std::vector<double> augmented_knots() const;
};

// M-spline M_j^p(x) on the augmented knots of `spec` (1-based j).
// Evaluated by the top-down recursion; zero outside (t_j, t_{j+p}).
double m_spline(int j, int p, double x, const SplineBasisSpec& spec);

// I-spline I_j^p(x) = integral of M_j^p from `lower` to x, evaluated with the
// piecewise closed form (0 / partial M^{p+1} sum / 1).
double i_spline(int j, int p, double x, const SplineBasisSpec& spec);

// N x spec.dimension() matrix with entry (i, j) = I_{j+1}^{order}(xs[i]).
Eigen::MatrixXd design_matrix(std::span<const double> xs,
                              const SplineBasisSpec& spec);

// One design-matrix row.
Eigen::RowVectorXd basis_row(double x, const SplineBasisSpec& spec);

}  // namespace wpcm
