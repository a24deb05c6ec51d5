#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fol/fem.hpp"
#include "fol/mesh.hpp"
#include "fol/thermal.hpp"

namespace fol {

/// Plane-stress constitutive matrix, Voigt order (xx, yy, engineering xy).
/// Requires E > 0 and 0 <= nu < 0.5.
Eigen::Matrix3d constitutive_plane_stress(double E, double nu);

/// 3x8 strain-displacement matrix for DOF order (ux1, uy1, ..., ux4, uy4).
Eigen::Matrix<double, 3, 8> strain_displacement(const ShapeEval& s);

/// sum_gp w detJ B^T C(N.E_e, nu) B.
Eigen::Matrix<double, 8, 8> element_stiffness_elastic(const Eigen::Vector4d& Ee, double nu,
                                                      std::span<const GaussSample> geom);

/// Mesh, Poisson ratio, and modulus-linear element tables. DOF 2n+c is
/// displacement component c of node n.
class ElasticSpace {
 public:
  static std::shared_ptr<const ElasticSpace> create(Mesh mesh, double nu, int quad_order = 2);

  const Mesh& mesh() const noexcept { return mesh_; }
  double nu() const noexcept { return nu_; }
  const std::vector<std::vector<GaussSample>>& geometry() const noexcept { return geometry_; }
  const ElementTables<8>& stiffness() const noexcept { return *tables_; }

 private:
  ElasticSpace() = default;

  Mesh mesh_;
  double nu_ = 0.0;
  std::vector<std::vector<GaussSample>> geometry_;
  std::unique_ptr<ElementTables<8>> tables_;
};

/// Constant traction on a boundary segment.
struct EdgeTraction {
  std::array<int, 2> segment{};
  Eigen::Vector2d traction = Eigen::Vector2d::Zero();
};

struct ElasticBVP {
  std::shared_ptr<const ElasticSpace> space;
  Eigen::VectorXd E_nodal;
  std::vector<DirichletValue> dirichlet;
  std::vector<EdgeTraction> tractions;

  const Mesh& mesh() const { return space->mesh(); }
  int num_dofs() const { return 2 * space->mesh().num_nodes(); }
  void validate() const;
};

/// Bottom edge clamped, top edge displaced uniformly by (ux, uy).
ElasticBVP make_top_displacement_bvp(std::shared_ptr<const ElasticSpace> space,
                                     Eigen::VectorXd E_nodal, double ux, double uy);

Eigen::VectorXd elastic_load(const ElasticBVP& bvp);

struct ElasticSolution {
  Eigen::VectorXd U;        // 2N
  Eigen::MatrixX3d strain;  // per node, corner-averaged
  Eigen::MatrixX3d stress;  // per node, corner-averaged
};

/// Throws SingularSystemError when rigid modes are not constrained.
ElasticSolution solve_elastic(const ElasticBVP& bvp);

/// Strain and stress of a displacement field, corner values averaged to nodes.
std::pair<Eigen::MatrixX3d, Eigen::MatrixX3d> recover_stress(const ElasticBVP& bvp,
                                                             const Eigen::VectorXd& U);

Eigen::VectorXd displacement_magnitude(const Eigen::VectorXd& U);

}  // namespace fol
