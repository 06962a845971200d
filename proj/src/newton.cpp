#include "wpcm/newton.hpp"

#include <cmath>
#include <limits>

#include "wpcm/errors.hpp"

namespace wpcm {

namespace {

double checked(const ScalarFn& f, double x) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    throw NumericError("residual is not finite inside the bounds");
  }
  return v;
}

double numeric_derivative(const ScalarFn& f, double x, Interval b) {
  const double h = 1e-6 * std::max(1.0, std::abs(x));
  const double lo = std::max(b.lo, x - h);
  const double hi = std::min(b.hi, x + h);
  if (!(hi > lo)) {
    return 0.0;
  }
  return (checked(f, hi) - checked(f, lo)) / (hi - lo);
}

}  // namespace

NewtonResult newton_solve(const ScalarFn& residual, double guess,
                          Interval bounds, double tol, int max_iter,
                          const ScalarFn& derivative) {
  if (!(bounds.lo <= bounds.hi)) {
    throw NumericError("newton_solve: empty bounds");
  }
  NewtonResult out;
  double x = bounds.clamp(guess);
  double r = checked(residual, x);
  double best_x = x;
  double best_r = std::abs(r);
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    const double d = derivative ? derivative(x)
                                : numeric_derivative(residual, x, bounds);
    if (!std::isfinite(d) || d == 0.0) {
      break;
    }
    const double next = bounds.clamp(x - r / d);
    const double step = std::abs(next - x);
    x = next;
    r = checked(residual, x);
    if (std::abs(r) < best_r) {
      best_r = std::abs(r);
      best_x = x;
    }
    if (step < tol) {
      out.root = x;
      out.converged = true;
      return out;
    }
  }
  out.root = best_x;
  out.converged = false;
  return out;
}

MaximizeResult maximize_scalar(const ScalarObjective& f, double x0,
                               Interval bounds, double tol, int max_iter) {
  x0 = bounds.clamp(x0);
  const double f0 = f.value(x0);
  const double g0 = f.gradient(x0);
  // Round-off allowance when comparing objective values.
  const double slack = 1e-13 * (1.0 + std::abs(f0));
  if (g0 == 0.0) {
    return {x0, true};
  }

  // Plain Newton on the stationarity equation, seeded at the current value.
  try {
    const NewtonResult nr =
        newton_solve(f.gradient, x0, bounds, tol, max_iter, f.curvature);
    if (nr.converged) {
      const double fx = f.value(nr.root);
      const bool interior = nr.root > bounds.lo && nr.root < bounds.hi;
      const bool is_max = interior ? f.curvature(nr.root) < 0.0 : true;
      if (is_max && std::isfinite(fx) && fx >= f0 - slack) {
        return {nr.root, true};
      }
    }
  } catch (const NumericError&) {
    // fall through to the bracketing search
  }

  // Walk uphill until the gradient changes sign or a bound is reached.
  const double dir = g0 > 0.0 ? 1.0 : -1.0;
  double a = x0;
  double step = 1e-2 * std::max(1.0, std::abs(x0));
  double b = bounds.clamp(a + dir * step);
  double gb = f.gradient(b);
  while (std::isfinite(gb) && gb * dir > 0.0 && b != bounds.lo &&
         b != bounds.hi) {
    a = b;
    step *= 2.0;
    b = bounds.clamp(a + dir * step);
    gb = f.gradient(b);
  }
  double candidate;
  bool converged = true;
  if (std::isfinite(gb) && gb * dir > 0.0) {
    candidate = b;
  } else {
    // Gradient sign change inside [a, b] (in walk order): refine.
    double lo = std::min(a, b), hi = std::max(a, b);
    double x = 0.5 * (lo + hi);
    converged = false;
    for (int it = 0; it < 4 * max_iter + 100; ++it) {
      const double g = f.gradient(x);
      if (!std::isfinite(g)) {
        // Treat a non-finite gradient as lying beyond the maximum.
        if (dir > 0) hi = x; else lo = x;
      } else if (g > 0.0) {
        lo = x;
      } else {
        hi = x;
      }
      double next = 0.5 * (lo + hi);
      const double c = f.curvature(x);
      if (std::isfinite(g) && std::isfinite(c) && c < 0.0) {
        const double newton = x - g / c;
        if (newton > lo && newton < hi) {
          next = newton;
        }
      }
      if (std::abs(next - x) < tol || hi - lo < tol) {
        x = next;
        converged = true;
        break;
      }
      x = next;
    }
    candidate = x;
  }
  const double fc = f.value(candidate);
  if (std::isfinite(fc) && fc >= f0 - slack) {
    return {candidate, converged};
  }
  return {x0, false};
}

}  // namespace wpcm
