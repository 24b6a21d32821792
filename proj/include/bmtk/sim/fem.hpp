#pragma once

#include <memory>

#include <Eigen/Core>

#include "bmtk/sim/material.hpp"
#include "bmtk/sim/mesh.hpp"

namespace bmtk::sim {

struct SolverOptions {
  int max_increments = 20;
  int max_halvings = 8;
  int max_newton_iterations = 25;
  /// Convergence: residual norm below rel_tolerance times the reference load norm.
  double rel_tolerance = 1e-8;
  /// Pressure increment used to plan load steps, kPa.
  double nominal_increment_kpa = 0.5;
};

/// Converged quasi-static configuration under a given cavity pressure.
struct EquilibriumState {
  double pressure_kpa = 0.0;
  Eigen::VectorXd displacement;  // 2 per node, mm
  double residual_norm = 0.0;
  double load_norm = 0.0;
  int newton_iterations = 0;
};

/// Plane-strain neo-Hookean equilibrium (div sigma = 0) with a follower pressure
/// on the inner boundary, a traction-free outer boundary and the area-weighted
/// mean translation and rotation of the mesh held at zero. Newton runs with three
/// dofs pinned; the converged shape is then moved rigidly onto the constraint,
/// which leaves the residual unchanged.
class EquilibriumSolver {
 public:
  EquilibriumSolver(FemMesh mesh, const MaterialParams& material, SolverOptions options = {});
  ~EquilibriumSolver();
  EquilibriumSolver(EquilibriumSolver&&) noexcept;
  EquilibriumSolver& operator=(EquilibriumSolver&&) noexcept;

  /// Solves from the stress-free state. Throws SolverError when load stepping is exhausted.
  EquilibriumState solve(double pressure_kpa);
  /// Continues from a converged state to a new pressure.
  EquilibriumState solve_from(const EquilibriumState& start, double pressure_kpa);

  /// Newton at guess.pressure_kpa starting from guess.displacement, no load stepping.
  /// Returns false (leaving guess unspecified) when Newton fails.
  bool refine(EquilibriumState& guess);

  const FemMesh& mesh() const;
  /// Region (myocardium + cavity) area of the deformed configuration, mm^2.
  double deformed_region_area(const Eigen::VectorXd& displacement) const;
  /// Norm of R(u) = f_int(u) - f_ext(u, p) restricted to nodal dofs.
  double residual_norm(const Eigen::VectorXd& displacement, double pressure_kpa) const;
  /// Norm of the external pressure load on the undeformed mesh.
  double reference_load_norm(double pressure_kpa) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Nodal displacements (mm) at equilibrium under pressure `pressure_kpa` (>= 0).
Eigen::VectorXd solve_equilibrium(const FemMesh& mesh, const MaterialParams& material, double pressure_kpa,
                                  const SolverOptions& options = {});

}  // namespace bmtk::sim
