#include "bmtk/sim/fem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "bmtk/errors.hpp"

namespace bmtk::sim {

namespace {

constexpr std::array<double, 3> kEdgePoints{-0.774596669241483, 0.0, 0.774596669241483};
constexpr std::array<double, 3> kEdgeWeights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

struct QuadData {
  Eigen::Matrix<double, 6, 2> dn_dx;  // reference-configuration gradients
  double weight;                      // quadrature weight times reference Jacobian
};

}  // namespace

struct EquilibriumSolver::Impl {
  FemMesh mesh;
  NeoHookean law;
  SolverOptions options;
  std::vector<std::array<QuadData, 6>> quad;
  std::vector<double> lumped;  // integral of each shape function over the reference mesh
  std::vector<Eigen::Vector2d> moments;  // integral of N_a (X - Xc)
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  std::array<int, 3> pinned{};  // dofs held during a Newton solve; rigid fix-up follows
  std::vector<char> is_pinned;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  bool factorized = false;

  Impl(FemMesh m, const MaterialParams& material, SolverOptions opt)
      : mesh(std::move(m)), law(material), options(opt) {
    const std::size_t ndof = mesh.dofs();
    quad.resize(mesh.elements.size());
    double area = 0.0;
    lumped.assign(mesh.nodes.size(), 0.0);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
      const auto& el = mesh.elements[e];
      const auto& rule = p2::quadrature();
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto dn = p2::shape_grad(rule[q].xi, rule[q].eta);
        Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
        for (int a = 0; a < 6; ++a) j += mesh.nodes[el[a]] * dn.row(a);
        const double det = j.determinant();
        if (!(det > 0.0)) throw GeometryError("mesh element " + std::to_string(e) + " has non-positive Jacobian");
        quad[e][q].dn_dx = dn * j.inverse();
        quad[e][q].weight = rule[q].weight * det;
        const auto n = p2::shape(rule[q].xi, rule[q].eta);
        Eigen::Vector2d x = Eigen::Vector2d::Zero();
        for (int a = 0; a < 6; ++a) {
          x += n[a] * mesh.nodes[el[a]];
          lumped[el[a]] += n[a] * quad[e][q].weight;
        }
        centroid += quad[e][q].weight * x;
        area += quad[e][q].weight;
      }
    }
    centroid /= area;
    moments.assign(mesh.nodes.size(), Eigen::Vector2d::Zero());
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
      const auto& el = mesh.elements[e];
      const auto& rule = p2::quadrature();
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto n = p2::shape(rule[q].xi, rule[q].eta);
        Eigen::Vector2d x = Eigen::Vector2d::Zero();
        for (int a = 0; a < 6; ++a) x += n[a] * mesh.nodes[el[a]];
        for (int a = 0; a < 6; ++a) moments[el[a]] += n[a] * quad[e][q].weight * (x - centroid);
      }
    }
    // Two outer nodes roughly opposite each other: one fully fixed, the other fixed tangentially.
    const int a = mesh.outer_nodes.front();
    const int b = mesh.outer_nodes[mesh.outer_nodes.size() / 2];
    const Eigen::Vector2d ab = mesh.nodes[b] - mesh.nodes[a];
    pinned = {2 * a, 2 * a + 1, std::abs(ab.x()) >= std::abs(ab.y()) ? 2 * b + 1 : 2 * b};
    is_pinned.assign(ndof, 0);
    for (int d : pinned) is_pinned[d] = 1;
  }

  // Rigid motion of the deformed shape that zeroes the weighted mean displacement
  // and the integral of (X - Xc) x u. Exact, not linearised.
  void remove_rigid(Eigen::VectorXd& u) const {
    const std::size_t n = mesh.nodes.size();
    double wsum = 0.0;
    Eigen::Vector2d xbar = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      wsum += lumped[i];
      xbar += lumped[i] * (mesh.nodes[i] + Eigen::Vector2d(u[2 * i], u[2 * i + 1]));
    }
    xbar /= wsum;
    double dot = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& m = moments[i];
      const Eigen::Vector2d e = mesh.nodes[i] + Eigen::Vector2d(u[2 * i], u[2 * i + 1]) - xbar;
      dot += m.dot(e);
      cross += m.x() * e.y() - m.y() * e.x();
    }
    const double th = std::atan2(-cross, dot);
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d e = mesh.nodes[i] + Eigen::Vector2d(u[2 * i], u[2 * i + 1]) - xbar;
      const Eigen::Vector2d x = centroid + Eigen::Vector2d(c * e.x() - s * e.y(), s * e.x() + c * e.y());
      u[2 * i] = x.x() - mesh.nodes[i].x();
      u[2 * i + 1] = x.y() - mesh.nodes[i].y();
    }
  }

  // External follower-pressure forces on the current inner boundary, plus
  // optionally the load stiffness -d f_ext / d u.
  void pressure_load(const Eigen::VectorXd& u, double p, Eigen::VectorXd& f_ext,
                     std::vector<Eigen::Triplet<double>>* stiffness) const {
    for (const auto& edge : mesh.inner_edges) {
      std::array<Eigen::Vector2d, 3> x;
      for (int a = 0; a < 3; ++a) x[a] = mesh.nodes[edge[a]] + Eigen::Vector2d(u[2 * edge[a]], u[2 * edge[a] + 1]);
      for (int q = 0; q < 3; ++q) {
        const auto n = p2::edge_shape(kEdgePoints[q]);
        const auto dn = p2::edge_shape_deriv(kEdgePoints[q]);
        Eigen::Vector2d t = Eigen::Vector2d::Zero();
        for (int b = 0; b < 3; ++b) t += dn[b] * x[b];
        const double w = p * kEdgeWeights[q];
        for (int a = 0; a < 3; ++a) {
          f_ext[2 * edge[a]] += w * n[a] * t.y();
          f_ext[2 * edge[a] + 1] -= w * n[a] * t.x();
          if (!stiffness) continue;
          for (int b = 0; b < 3; ++b) {
            const double v = w * n[a] * dn[b];
            stiffness->emplace_back(2 * edge[a], 2 * edge[b] + 1, -v);
            stiffness->emplace_back(2 * edge[a] + 1, 2 * edge[b], v);
          }
        }
      }
    }
  }

  // Internal forces and (optionally) tangent. Returns the smallest det F seen.
  double internal(const Eigen::VectorXd& u, Eigen::VectorXd& f_int,
                  std::vector<Eigen::Triplet<double>>* stiffness) const {
    double min_det = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
      const auto& el = mesh.elements[e];
      Eigen::Matrix<double, 12, 12> ke = Eigen::Matrix<double, 12, 12>::Zero();
      Eigen::Matrix<double, 12, 1> fe = Eigen::Matrix<double, 12, 1>::Zero();
      for (const auto& qd : quad[e]) {
        Eigen::Matrix2d f = Eigen::Matrix2d::Identity();
        for (int a = 0; a < 6; ++a) {
          f += Eigen::Vector2d(u[2 * el[a]], u[2 * el[a] + 1]) * qd.dn_dx.row(a);
        }
        const double det = f.determinant();
        min_det = std::min(min_det, det);
        if (!(det > 0.0)) return min_det;
        const Eigen::Matrix2d p = law.pk1(f);
        for (int a = 0; a < 6; ++a) {
          for (int i = 0; i < 2; ++i) {
            fe[2 * a + i] += qd.weight * (p(i, 0) * qd.dn_dx(a, 0) + p(i, 1) * qd.dn_dx(a, 1));
          }
        }
        if (!stiffness) continue;
        const Matrix4d tan = law.tangent(f);
        for (int a = 0; a < 6; ++a) {
          for (int i = 0; i < 2; ++i) {
            for (int b = 0; b < 6; ++b) {
              for (int k = 0; k < 2; ++k) {
                double v = 0.0;
                for (int jj = 0; jj < 2; ++jj) {
                  for (int l = 0; l < 2; ++l) v += qd.dn_dx(a, jj) * tan(2 * i + jj, 2 * k + l) * qd.dn_dx(b, l);
                }
                ke(2 * a + i, 2 * b + k) += qd.weight * v;
              }
            }
          }
        }
      }
      for (int a = 0; a < 6; ++a) {
        for (int i = 0; i < 2; ++i) {
          f_int[2 * el[a] + i] += fe[2 * a + i];
          if (!stiffness) continue;
          for (int b = 0; b < 6; ++b) {
            for (int k = 0; k < 2; ++k) stiffness->emplace_back(2 * el[a] + i, 2 * el[b] + k, ke(2 * a + i, 2 * b + k));
          }
        }
      }
    }
    return min_det;
  }

  double residual_of(const Eigen::VectorXd& u, double p) const {
    const Eigen::Index ndof = static_cast<Eigen::Index>(mesh.dofs());
    Eigen::VectorXd f_int = Eigen::VectorXd::Zero(ndof), f_ext = Eigen::VectorXd::Zero(ndof);
    internal(u, f_int, nullptr);
    pressure_load(u, p, f_ext, nullptr);
    return (f_int - f_ext).norm();
  }

  double load_norm(double p) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.dofs()));
    pressure_load(Eigen::VectorXd::Zero(f.size()), p, f, nullptr);
    return f.norm();
  }

  // Newton iterations at fixed pressure with the pinned dofs held. Returns false on divergence.
  // The last factorisation is reused while it still cuts the residual by 3x per step.
  bool newton(Eigen::VectorXd& u, double p, double tol_abs, int& iterations, double& residual) {
    const Eigen::Index ndof = static_cast<Eigen::Index>(mesh.dofs());
    std::vector<Eigen::Triplet<double>> trip, kept;
    double previous = std::numeric_limits<double>::infinity();
    bool fresh = false;  // factorisation taken at the current iterate sequence
    for (iterations = 0; iterations <= options.max_newton_iterations; ++iterations) {
      Eigen::VectorXd f_int = Eigen::VectorXd::Zero(ndof);
      Eigen::VectorXd f_ext = Eigen::VectorXd::Zero(ndof);
      const double min_det = internal(u, f_int, nullptr);
      if (!(min_det > 0.0)) return false;
      pressure_load(u, p, f_ext, nullptr);
      Eigen::VectorXd rhs = f_int - f_ext;
      residual = rhs.norm();
      if (!std::isfinite(residual)) return false;
      if (residual <= tol_abs) return true;
      if (iterations == options.max_newton_iterations) return false;
      const bool stale = !factorized || residual > 0.3 * previous;
      if (stale) {
        if (fresh && residual > previous) return false;  // a true Newton step already failed to help
        trip.clear();
        trip.reserve(mesh.elements.size() * 144 + mesh.inner_edges.size() * 36);
        Eigen::VectorXd scratch = Eigen::VectorXd::Zero(ndof);
        internal(u, scratch, &trip);
        pressure_load(u, p, scratch, &trip);
        kept.clear();
        kept.reserve(trip.size() + 3);
        for (const auto& t : trip) {
          if (!is_pinned[t.row()] && !is_pinned[t.col()]) kept.push_back(t);
        }
        for (int d : pinned) kept.emplace_back(d, d, law.mu());
        Eigen::SparseMatrix<double> k(ndof, ndof);
        k.setFromTriplets(kept.begin(), kept.end());
        if (!analyzed) {
          lu.analyzePattern(k);
          analyzed = true;
        }
        lu.factorize(k);
        factorized = lu.info() == Eigen::Success;
        if (!factorized) return false;
        fresh = true;
      }
      for (int d : pinned) rhs[d] = 0.0;
      const Eigen::VectorXd step = lu.solve(-rhs);
      if (!step.allFinite()) return false;
      u += step;
      previous = residual;
    }
    return false;
  }

  EquilibriumState continue_to(const EquilibriumState& start, double target) {
    if (!(target >= 0.0) || !std::isfinite(target)) throw ArgumentError("pressure must be finite and >= 0");
    EquilibriumState state = start;
    if (state.displacement.size() == 0) state.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.dofs()));
    const double final_tol = options.rel_tolerance * load_norm(target);
    if (target == 0.0) {
      EquilibriumState zero;
      zero.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.dofs()));
      return zero;
    }
    const double span = target - state.pressure_kpa;
    const int planned = std::clamp(static_cast<int>(std::ceil(std::abs(span) / options.nominal_increment_kpa)), 1,
                                   options.max_increments);
    double step = span / planned;
    int halvings = 0;
    double last_residual = 0.0;
    while (state.pressure_kpa != target) {
      double next = state.pressure_kpa + step;
      if ((step > 0 && next > target) || (step < 0 && next < target) ||
          std::abs(target - next) < 1e-12 * std::abs(target)) {
        next = target;
      }
      Eigen::VectorXd u = state.displacement;
      int iters = 0;
      double residual = 0.0;
      const double tol = next == target ? final_tol : options.rel_tolerance * load_norm(next) * 10.0;
      if (newton(u, next, tol, iters, residual)) {
        remove_rigid(u);
        state.pressure_kpa = next;
        state.displacement = std::move(u);
        state.newton_iterations += iters;
        state.residual_norm = residual;
        continue;
      }
      last_residual = residual;
      if (++halvings > options.max_halvings) {
        throw SolverError("Newton did not converge at pressure " + std::to_string(next) +
                              " kPa after exhausting load-step halvings",
                          last_residual);
      }
      step *= 0.5;
    }
    state.load_norm = load_norm(target);
    // recompute after the rigid fix-up
    state.residual_norm = residual_of(state.displacement, target);
    return state;
  }
};

EquilibriumSolver::EquilibriumSolver(FemMesh mesh, const MaterialParams& material, SolverOptions options)
    : impl_(std::make_unique<Impl>(std::move(mesh), material, options)) {}
EquilibriumSolver::~EquilibriumSolver() = default;
EquilibriumSolver::EquilibriumSolver(EquilibriumSolver&&) noexcept = default;
EquilibriumSolver& EquilibriumSolver::operator=(EquilibriumSolver&&) noexcept = default;

EquilibriumState EquilibriumSolver::solve(double pressure_kpa) { return impl_->continue_to({}, pressure_kpa); }

EquilibriumState EquilibriumSolver::solve_from(const EquilibriumState& start, double pressure_kpa) {
  return impl_->continue_to(start, pressure_kpa);
}

bool EquilibriumSolver::refine(EquilibriumState& guess) {
  const double p = guess.pressure_kpa;
  if (!(p >= 0.0) || !std::isfinite(p)) throw ArgumentError("pressure must be finite and >= 0");
  if (guess.displacement.size() != static_cast<Eigen::Index>(impl_->mesh.dofs())) {
    throw DimensionError("displacement guess has the wrong length");
  }
  if (p == 0.0) {
    guess.displacement.setZero();
    guess.residual_norm = guess.load_norm = 0.0;
    return true;
  }
  int iters = 0;
  double residual = 0.0;
  const double load = impl_->load_norm(p);
  if (!impl_->newton(guess.displacement, p, impl_->options.rel_tolerance * load, iters, residual)) return false;
  impl_->remove_rigid(guess.displacement);
  guess.newton_iterations += iters;
  guess.load_norm = load;
  guess.residual_norm = impl_->residual_of(guess.displacement, p);
  return true;
}

const FemMesh& EquilibriumSolver::mesh() const { return impl_->mesh; }

double EquilibriumSolver::deformed_region_area(const Eigen::VectorXd& displacement) const {
  return region_area(impl_->mesh.displaced(displacement));
}

double EquilibriumSolver::residual_norm(const Eigen::VectorXd& displacement, double pressure_kpa) const {
  return impl_->residual_of(displacement, pressure_kpa);
}

double EquilibriumSolver::reference_load_norm(double pressure_kpa) const { return impl_->load_norm(pressure_kpa); }

Eigen::VectorXd solve_equilibrium(const FemMesh& mesh, const MaterialParams& material, double pressure_kpa,
                                  const SolverOptions& options) {
  EquilibriumSolver solver(mesh, material, options);
  return solver.solve(pressure_kpa).displacement;
}

}  // namespace bmtk::sim
