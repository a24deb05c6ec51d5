#include "fol/elasticity.hpp"

#include <cmath>

#include "fol/error.hpp"

namespace fol {

Eigen::Matrix3d constitutive_plane_stress(double E, double nu) {
  if (!(E > 0.0)) throw ConfigError("Young's modulus must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw ConfigError("Poisson ratio must lie in [0, 0.5)");
  Eigen::Matrix3d C;
  C << 1.0, nu, 0.0,
       nu, 1.0, 0.0,
       0.0, 0.0, 0.5 * (1.0 - nu);
  return (E / (1.0 - nu * nu)) * C;
}

Eigen::Matrix<double, 3, 8> strain_displacement(const ShapeEval& s) {
  Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    B(0, 2 * a) = s.B(0, a);
    B(1, 2 * a + 1) = s.B(1, a);
    B(2, 2 * a) = s.B(1, a);
    B(2, 2 * a + 1) = s.B(0, a);
  }
  return B;
}

Eigen::Matrix<double, 8, 8> element_stiffness_elastic(const Eigen::Vector4d& Ee, double nu,
                                                      std::span<const GaussSample> geom) {
  Eigen::Matrix<double, 8, 8> K = Eigen::Matrix<double, 8, 8>::Zero();
  for (const auto& g : geom) {
    const auto B = strain_displacement(g.shape);
    K += g.weight_detj * B.transpose() * constitutive_plane_stress(g.shape.N.dot(Ee), nu) * B;
  }
  return K;
}

std::shared_ptr<const ElasticSpace> ElasticSpace::create(Mesh mesh, double nu, int quad_order) {
  const Eigen::Matrix3d C1 = constitutive_plane_stress(1.0, nu);
  std::shared_ptr<ElasticSpace> s(new ElasticSpace());
  s->mesh_ = std::move(mesh);
  s->nu_ = nu;
  s->geometry_ = element_geometry(s->mesh_, gauss_rule(quad_order));
  const int ne = s->mesh_.num_elements();
  std::vector<std::array<int, 8>> dofs(static_cast<std::size_t>(ne));
  std::vector<std::array<Eigen::Matrix<double, 8, 8>, 4>> basis(static_cast<std::size_t>(ne));
  for (int e = 0; e < ne; ++e) {
    const auto& c = s->mesh_.element(e);
    for (int a = 0; a < 4; ++a) {
      dofs[static_cast<std::size_t>(e)][2 * a] = 2 * c[a];
      dofs[static_cast<std::size_t>(e)][2 * a + 1] = 2 * c[a] + 1;
    }
    auto& b = basis[static_cast<std::size_t>(e)];
    for (auto& m : b) m.setZero();
    for (const auto& g : s->geometry_[static_cast<std::size_t>(e)]) {
      const auto B = strain_displacement(g.shape);
      const Eigen::Matrix<double, 8, 8> BtCB = B.transpose() * C1 * B;
      for (int a = 0; a < 4; ++a) b[a] += (g.weight_detj * g.shape.N[a]) * BtCB;
    }
  }
  s->tables_ = std::make_unique<ElementTables<8>>(s->mesh_.num_nodes(), s->mesh_.elems(),
                                                  std::move(dofs), std::move(basis));
  return s;
}

void ElasticBVP::validate() const {
  if (!space) throw ConfigError("elastic BVP has no discretization");
  if (E_nodal.size() != mesh().num_nodes()) throw ConfigError("E_nodal size does not match the mesh");
  if ((E_nodal.array() <= 0.0).any()) throw ConfigError("Young's modulus must be positive");
  if (dirichlet.size() < 3) {
    throw SingularSystemError("at least 3 displacement constraints are needed to remove rigid modes");
  }
}

ElasticBVP make_top_displacement_bvp(std::shared_ptr<const ElasticSpace> space,
                                     Eigen::VectorXd E_nodal, double ux, double uy) {
  ElasticBVP bvp;
  const Mesh& mesh = space->mesh();
  bvp.space = std::move(space);
  bvp.E_nodal = std::move(E_nodal);
  for (int n : mesh.edge_nodes(Edge::Bottom)) {
    bvp.dirichlet.push_back({2 * n, 0.0});
    bvp.dirichlet.push_back({2 * n + 1, 0.0});
  }
  for (int n : mesh.edge_nodes(Edge::Top)) {
    bvp.dirichlet.push_back({2 * n, ux});
    bvp.dirichlet.push_back({2 * n + 1, uy});
  }
  return bvp;
}

Eigen::VectorXd elastic_load(const ElasticBVP& bvp) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(bvp.num_dofs());
  for (const auto& t : bvp.tractions) {
    const auto& p0 = bvp.mesh().node(t.segment[0]);
    const auto& p1 = bvp.mesh().node(t.segment[1]);
    const double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
    for (int n : t.segment) {
      f[2 * n] += 0.5 * len * t.traction[0];
      f[2 * n + 1] += 0.5 * len * t.traction[1];
    }
  }
  return f;
}

std::pair<Eigen::MatrixX3d, Eigen::MatrixX3d> recover_stress(const ElasticBVP& bvp,
                                                             const Eigen::VectorXd& U) {
  const Mesh& mesh = bvp.mesh();
  const int n = mesh.num_nodes();
  Eigen::MatrixX3d strain = Eigen::MatrixX3d::Zero(n, 3);
  Eigen::MatrixX3d stress = Eigen::MatrixX3d::Zero(n, 3);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
  static constexpr std::array<std::array<double, 2>, 4> corners{
      {{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& c = mesh.element(e);
    Eigen::Matrix<double, 8, 1> Ue;
    Eigen::Vector4d Ee;
    for (int a = 0; a < 4; ++a) {
      Ue[2 * a] = U[2 * c[a]];
      Ue[2 * a + 1] = U[2 * c[a] + 1];
      Ee[a] = bvp.E_nodal[c[a]];
    }
    for (int a = 0; a < 4; ++a) {
      const ShapeEval s = shape_eval(mesh, e, corners[a][0], corners[a][1]);
      const Eigen::Vector3d eps = strain_displacement(s) * Ue;
      const Eigen::Vector3d sig = constitutive_plane_stress(s.N.dot(Ee), bvp.space->nu()) * eps;
      strain.row(c[a]) += eps.transpose();
      stress.row(c[a]) += sig.transpose();
      count[c[a]] += 1.0;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (count[i] > 0) {
      strain.row(i) /= count[i];
      stress.row(i) /= count[i];
    }
  }
  return {strain, stress};
}

ElasticSolution solve_elastic(const ElasticBVP& bvp) {
  bvp.validate();
  const DofPartition part(bvp.num_dofs(), bvp.dirichlet);
  const SparseMatrix K = bvp.space->stiffness().assemble(bvp.E_nodal);
  ElasticSolution sol;
  sol.U = solve_constrained(K, elastic_load(bvp), part);
  std::tie(sol.strain, sol.stress) = recover_stress(bvp, sol.U);
  return sol;
}

Eigen::VectorXd displacement_magnitude(const Eigen::VectorXd& U) {
  const Eigen::Index n = U.size() / 2;
  Eigen::VectorXd m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = std::hypot(U[2 * i], U[2 * i + 1]);
  return m;
}

}  // namespace fol
