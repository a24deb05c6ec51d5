#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fol/fem.hpp"
#include "fol/mesh.hpp"

namespace fol {

/// Shape data at one quadrature point, pre-multiplied weight w * detJ.
struct GaussSample {
  ShapeEval shape;
  double weight_detj = 0.0;
};

/// Evaluates shape data of every element at every point of `rule`.
std::vector<std::vector<GaussSample>> element_geometry(const Mesh& mesh, const QuadratureRule& rule);

/// Mesh plus precomputed conductivity-linear element tables.
class ThermalSpace {
 public:
  static std::shared_ptr<const ThermalSpace> create(Mesh mesh, int quad_order = 2);

  const Mesh& mesh() const noexcept { return mesh_; }
  const QuadratureRule& rule() const noexcept { return rule_; }
  const std::vector<std::vector<GaussSample>>& geometry() const noexcept { return geometry_; }
  const ElementTables<4>& stiffness() const noexcept { return *tables_; }
  /// Consistent mass matrix M with f_Q = M q for a nodal source field q.
  const SparseMatrix& mass() const noexcept { return mass_; }

 private:
  ThermalSpace() = default;

  Mesh mesh_;
  QuadratureRule rule_;
  std::vector<std::vector<GaussSample>> geometry_;
  std::unique_ptr<ElementTables<4>> tables_;
  SparseMatrix mass_;
};

/// k(T) = m1 + beta * s * T^m2 with s the nodal scale field of the BVP
/// (k_nodal). With s = 1 this is the plain temperature-dependent law.
struct NonlinearConductivity {
  double m1 = 2.0;
  double m2 = 4.0;
  double beta = 1.0;
};

/// Prescribed normal flux q.n = qbar on a boundary segment.
struct NeumannFlux {
  std::array<int, 2> segment{};
  double qbar = 0.0;
};

struct ThermalBVP {
  std::shared_ptr<const ThermalSpace> space;
  Eigen::VectorXd k_nodal;   // W/mK (scale field in nonlinear mode)
  Eigen::VectorXd q_source;  // W/m^3
  std::vector<DirichletValue> dirichlet;
  std::vector<NeumannFlux> neumann;
  std::optional<NonlinearConductivity> nonlinear;

  const Mesh& mesh() const { return space->mesh(); }
  int num_nodes() const { return space->mesh().num_nodes(); }
  /// Throws ConfigError on size mismatches, empty Dirichlet data or
  /// non-positive conductivity.
  void validate() const;
};

/// Dirichlet data for every node of a grid edge (scalar field, or one
/// component of a `components`-vector field).
std::vector<DirichletValue> edge_dirichlet(const Mesh& mesh, Edge edge, double value,
                                           int components = 1, int component = 0);

/// Left edge at t_left, right edge at t_right, the rest insulated.
ThermalBVP make_thermal_bvp(std::shared_ptr<const ThermalSpace> space, Eigen::VectorXd k_nodal,
                            double t_left = 1.0, double t_right = 0.1);

/// Element residual from the quadrature definition:
///   r_e = sum_gp w detJ [B^T (N.k_e) B T_e - N (N.Q_e)].
Eigen::Vector4d element_residual(const Eigen::Vector4d& Te, const Eigen::Vector4d& ke,
                                 const Eigen::Vector4d& Qe, std::span<const GaussSample> geom);

struct AssembledSystem {
  SparseMatrix K;
  Eigen::VectorXd f;
  DofPartition dofs;
};

/// Linear mode only.
AssembledSystem assemble(const ThermalBVP& bvp);

/// f = M q - (Neumann flux contributions).
Eigen::VectorXd load_vector(const ThermalBVP& bvp);

/// Nodal conductivity actually used: k_nodal, or k(T) in nonlinear mode.
Eigen::VectorXd effective_conductivity(const ThermalBVP& bvp, const Eigen::VectorXd& T);
/// dk/dT per node (zero in linear mode).
Eigen::VectorXd conductivity_derivative(const ThermalBVP& bvp, const Eigen::VectorXd& T);

/// r(T) = K(k(T)) T - f for all DOFs, evaluated element by element.
Eigen::VectorXd residual(const ThermalBVP& bvp, const Eigen::VectorXd& T);
/// (dr/dT)^T w without assembling a matrix.
Eigen::VectorXd residual_vjp(const ThermalBVP& bvp, const Eigen::VectorXd& T,
                             const Eigen::VectorXd& w);
/// Consistent tangent dr/dT (assembled).
SparseMatrix tangent(const ThermalBVP& bvp, const Eigen::VectorXd& T);
/// dr/dk at fixed T (assembled, N x N).
SparseMatrix conductivity_tangent(const ThermalBVP& bvp, const Eigen::VectorXd& T);

Eigen::VectorXd solve_linear(const ThermalBVP& bvp);

/// Newton iteration with halving line search. Throws ConvergenceError (with
/// the residual history) after max_iter iterations.
NewtonResult solve_newton(const ThermalBVP& bvp, double tol = 1e-10, int max_iter = 50);

/// Nodal heat flux q = -k grad T, averaged over the element corners that
/// share each node. Columns: (q_x, q_y).
Eigen::MatrixX2d recover_flux(const ThermalBVP& bvp, const Eigen::VectorXd& T);
/// Same with an explicit nodal conductivity.
Eigen::MatrixX2d recover_flux(const Mesh& mesh, const Eigen::VectorXd& k, const Eigen::VectorXd& T);

/// 100 * ||pred - ref|| / ||ref||. Throws ConfigError for a zero reference.
double relative_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref);

}  // namespace fol
