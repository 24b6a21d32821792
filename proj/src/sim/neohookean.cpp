#include "bmtk/sim/material.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "bmtk/errors.hpp"

namespace bmtk::sim {

void MaterialParams::validate() const {
  if (!(youngs_kpa > 0.0)) throw ArgumentError("elastic modulus must be positive");
  if (!(poisson > 0.0 && poisson < 0.5)) {
    throw ArgumentError("Poisson ratio must lie in (0, 0.5), got " + std::to_string(poisson));
  }
}

NeoHookean::NeoHookean(const MaterialParams& params) {
  params.validate();
  mu_ = params.shear_modulus();
  kappa_ = params.bulk_modulus();
}

namespace {

Eigen::Matrix2d cofactor(const Eigen::Matrix2d& f) {
  Eigen::Matrix2d k;
  k << f(1, 1), -f(1, 0), -f(0, 1), f(0, 0);
  return k;
}

// d cof(F)_iJ / dF_kL = e_ik e_JL with the 2D permutation symbol.
double perm(int a, int b) { return a == b ? 0.0 : (a < b ? 1.0 : -1.0); }

}  // namespace

double NeoHookean::energy(const Eigen::Matrix2d& f) const {
  const double j = f.determinant();
  const double lnj = std::log(j);
  return 0.5 * mu_ * (f.squaredNorm() / j - 2.0) + 0.5 * kappa_ * lnj * lnj;
}

Eigen::Matrix2d NeoHookean::pk1(const Eigen::Matrix2d& f) const {
  const double j = f.determinant();
  const double i1 = f.squaredNorm();
  const Eigen::Matrix2d k = cofactor(f);
  return mu_ / j * f - 0.5 * mu_ * i1 / (j * j) * k + kappa_ * std::log(j) / j * k;
}

Matrix4d NeoHookean::tangent(const Eigen::Matrix2d& f) const {
  const double j = f.determinant();
  const double i1 = f.squaredNorm();
  const double lnj = std::log(j);
  const Eigen::Matrix2d k = cofactor(f);
  Matrix4d a;
  for (int i = 0; i < 2; ++i) {
    for (int jj = 0; jj < 2; ++jj) {
      for (int kk = 0; kk < 2; ++kk) {
        for (int l = 0; l < 2; ++l) {
          const double delta = (i == kk && jj == l) ? 1.0 : 0.0;
          const double ee = perm(i, kk) * perm(jj, l);
          double v = mu_ * (delta / j - f(i, jj) * k(kk, l) / (j * j));
          v -= 0.5 * mu_ * (2.0 * f(kk, l) * k(i, jj) / (j * j) - 2.0 * i1 * k(kk, l) * k(i, jj) / (j * j * j) +
                            i1 * ee / (j * j));
          v += kappa_ * ((1.0 - lnj) * k(kk, l) * k(i, jj) / (j * j) + lnj * ee / j);
          a(2 * i + jj, 2 * kk + l) = v;
        }
      }
    }
  }
  return a;
}

Eigen::Matrix2d NeoHookean::cauchy(const Eigen::Matrix2d& f) const {
  return pk1(f) * f.transpose() / f.determinant();
}

}  // namespace bmtk::sim
