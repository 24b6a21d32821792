#pragma once

#include <Eigen/Core>

namespace bmtk::sim {

struct MaterialParams {
  double youngs_kpa = 55.14;
  double poisson = 0.49;

  /// Throws ArgumentError unless E > 0 and 0 < nu < 0.5.
  void validate() const;
  double shear_modulus() const { return youngs_kpa / (2.0 * (1.0 + poisson)); }
  double lame_lambda() const { return youngs_kpa * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)); }
  /// In-plane bulk modulus lambda + mu, so the small-strain limit is plane-strain elasticity.
  double bulk_modulus() const { return lame_lambda() + shear_modulus(); }
};

using Matrix4d = Eigen::Matrix4d;

/// Compressible plane-strain neo-Hookean solid
///   W(F) = mu/2 (J^-1 tr(F^T F) - 2) + kappa/2 (ln J)^2,  J = det F.
/// Tangent entries are indexed (2i + J, 2k + L) = dP_iJ / dF_kL.
class NeoHookean {
 public:
  explicit NeoHookean(const MaterialParams& params);

  double energy(const Eigen::Matrix2d& f) const;
  /// First Piola-Kirchhoff stress dW/dF.
  Eigen::Matrix2d pk1(const Eigen::Matrix2d& f) const;
  Matrix4d tangent(const Eigen::Matrix2d& f) const;
  /// Cauchy stress P F^T / J, equal to 2 F dW/dC F^T / J.
  Eigen::Matrix2d cauchy(const Eigen::Matrix2d& f) const;

  double mu() const { return mu_; }
  double kappa() const { return kappa_; }

 private:
  double mu_;
  double kappa_;
};

}  // namespace bmtk::sim
