#pragma once

#include <functional>

namespace wpcm {

struct Interval {
  double lo;
  double hi;

  double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct NewtonResult {
  double root = 0.0;
  bool converged = false;
  int iterations = 0;
};

using ScalarFn = std::function<double(double)>;

// Bounded Newton-Raphson. Iterates are clamped to `bounds`; stops when the
// step magnitude falls below `tol`. When `max_iter` is hit the iterate with
// the smallest |residual| is returned with converged = false. Without an
// analytic derivative a central difference is used. Throws NumericError when
// the residual is non-finite inside the bounds.
NewtonResult newton_solve(const ScalarFn& residual, double guess,
                          Interval bounds, double tol, int max_iter,
                          const ScalarFn& derivative = {});

struct ScalarObjective {
  ScalarFn value;
  ScalarFn gradient;
  ScalarFn curvature;
};

struct MaximizeResult {
  double x = 0.0;
  bool converged = false;
};

// Coordinate update: solves gradient(x) = 0 by bounded Newton from x0 and
// accepts the root when it is a local maximum that does not lower the
// objective. Otherwise brackets a maximum uphill from x0 and refines it by
// safeguarded Newton/bisection. Never returns a point worse than x0.
MaximizeResult maximize_scalar(const ScalarObjective& f, double x0,
                               Interval bounds, double tol, int max_iter);

}  // namespace wpcm
