#pragma once

// Independent reference computations shared by the unit and acceptance suites.

#include <cmath>

namespace bmtk::oracle {

/// Radial displacement of a thick-walled cylinder under internal pressure p
/// (plane strain, linear elasticity): u_r(r) = A r + B / r.
inline double lame_radial_displacement(double r, double inner, double outer, double p, double youngs,
                                       double poisson) {
  const double mu = youngs / (2.0 * (1.0 + poisson));
  const double lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  const double denom = outer * outer - inner * inner;
  const double a = p * inner * inner / (2.0 * (lambda + mu) * denom);
  const double b = p * inner * inner * outer * outer / (2.0 * mu * denom);
  return a * r + b / r;
}

}  // namespace bmtk::oracle
