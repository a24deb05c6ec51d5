#include "fol/thermal.hpp"

#include <cmath>
#include <sstream>


#include "fol/error.hpp"

namespace fol {

std::vector<std::vector<GaussSample>> element_geometry(const Mesh& mesh,
                                                       const QuadratureRule& rule) {
  std::vector<std::vector<GaussSample>> geo(static_cast<std::size_t>(mesh.num_elements()));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    auto& g = geo[static_cast<std::size_t>(e)];
    g.reserve(rule.size());
    for (const auto& qp : rule) {
      GaussSample s;
      s.shape = shape_eval(mesh, e, qp.xi, qp.eta);
      s.weight_detj = qp.weight * s.shape.detJ;
      g.push_back(s);
    }
  }
  return geo;
}

std::shared_ptr<const ThermalSpace> ThermalSpace::create(Mesh mesh, int quad_order) {
  std::shared_ptr<ThermalSpace> s(new ThermalSpace());
  s->mesh_ = std::move(mesh);
  s->rule_ = gauss_rule(quad_order);
  s->geometry_ = element_geometry(s->mesh_, s->rule_);

  const int ne = s->mesh_.num_elements();
  std::vector<std::array<int, 4>> nodes = s->mesh_.elems();
  std::vector<std::array<Eigen::Matrix4d, 4>> basis(static_cast<std::size_t>(ne));
  std::vector<Eigen::Triplet<double>> mass;
  mass.reserve(static_cast<std::size_t>(ne) * 16);
  for (int e = 0; e < ne; ++e) {
    auto& b = basis[static_cast<std::size_t>(e)];
    for (auto& m : b) m.setZero();
    Eigen::Matrix4d me = Eigen::Matrix4d::Zero();
    for (const auto& g : s->geometry_[static_cast<std::size_t>(e)]) {
      const Eigen::Matrix4d BtB = g.shape.B.transpose() * g.shape.B;
      for (int a = 0; a < 4; ++a) b[a] += (g.weight_detj * g.shape.N[a]) * BtB;
      me += g.weight_detj * g.shape.N * g.shape.N.transpose();
    }
    const auto& c = nodes[static_cast<std::size_t>(e)];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) mass.emplace_back(c[i], c[j], me(i, j));
    }
  }
  const int n = s->mesh_.num_nodes();
  s->tables_ = std::make_unique<ElementTables<4>>(n, nodes, nodes, std::move(basis));
  s->mass_.resize(n, n);
  s->mass_.setFromTriplets(mass.begin(), mass.end());
  return s;
}

void ThermalBVP::validate() const {
  if (!space) throw ConfigError("thermal BVP has no discretization");
  const int n = num_nodes();
  if (k_nodal.size() != n) throw ConfigError("k_nodal size does not match the mesh");
  if (q_source.size() != n) throw ConfigError("q_source size does not match the mesh");
  if (dirichlet.empty()) {
    throw SingularSystemError("thermal BVP without Dirichlet data is not well posed");
  }
  if (!nonlinear && (k_nodal.array() <= 0.0).any()) {
    throw ConfigError("conductivity must be strictly positive");
  }
}

std::vector<DirichletValue> edge_dirichlet(const Mesh& mesh, Edge edge, double value,
                                           int components, int component) {
  std::vector<DirichletValue> out;
  for (int n : mesh.edge_nodes(edge)) out.push_back({n * components + component, value});
  return out;
}

ThermalBVP make_thermal_bvp(std::shared_ptr<const ThermalSpace> space, Eigen::VectorXd k_nodal,
                            double t_left, double t_right) {
  ThermalBVP bvp;
  const Mesh& mesh = space->mesh();
  bvp.space = std::move(space);
  bvp.k_nodal = std::move(k_nodal);
  bvp.q_source = Eigen::VectorXd::Zero(mesh.num_nodes());
  bvp.dirichlet = edge_dirichlet(mesh, Edge::Left, t_left);
  const auto right = edge_dirichlet(mesh, Edge::Right, t_right);
  bvp.dirichlet.insert(bvp.dirichlet.end(), right.begin(), right.end());
  return bvp;
}

Eigen::Vector4d element_residual(const Eigen::Vector4d& Te, const Eigen::Vector4d& ke,
                                 const Eigen::Vector4d& Qe, std::span<const GaussSample> geom) {
  Eigen::Vector4d r = Eigen::Vector4d::Zero();
  for (const auto& g : geom) {
    const double k = g.shape.N.dot(ke);
    const double q = g.shape.N.dot(Qe);
    r += g.weight_detj * (g.shape.B.transpose() * (k * (g.shape.B * Te)) - g.shape.N * q);
  }
  return r;
}

Eigen::VectorXd load_vector(const ThermalBVP& bvp) {
  Eigen::VectorXd f = bvp.space->mass() * bvp.q_source;
  const Mesh& mesh = bvp.mesh();
  for (const auto& nf : bvp.neumann) {
    const auto& p0 = mesh.node(nf.segment[0]);
    const auto& p1 = mesh.node(nf.segment[1]);
    const double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
    // Outward flux leaves the body: +int qbar N dS moves to the residual side.
    f[nf.segment[0]] -= 0.5 * nf.qbar * len;
    f[nf.segment[1]] -= 0.5 * nf.qbar * len;
  }
  return f;
}

AssembledSystem assemble(const ThermalBVP& bvp) {
  bvp.validate();
  if (bvp.nonlinear) throw ConfigError("assemble() is linear-mode only; use tangent()");
  AssembledSystem sys;
  sys.K = bvp.space->stiffness().assemble(bvp.k_nodal);
  sys.f = load_vector(bvp);
  sys.dofs = DofPartition(bvp.num_nodes(), bvp.dirichlet);
  return sys;
}

Eigen::VectorXd effective_conductivity(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  if (!bvp.nonlinear) return bvp.k_nodal;
  const auto& nl = *bvp.nonlinear;
  Eigen::VectorXd k(T.size());
  for (Eigen::Index i = 0; i < T.size(); ++i) {
    k[i] = nl.m1 + nl.beta * bvp.k_nodal[i] * std::pow(T[i], nl.m2);
  }
  return k;
}

Eigen::VectorXd conductivity_derivative(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  if (!bvp.nonlinear) return Eigen::VectorXd::Zero(T.size());
  const auto& nl = *bvp.nonlinear;
  Eigen::VectorXd dk(T.size());
  for (Eigen::Index i = 0; i < T.size(); ++i) {
    dk[i] = nl.m2 == 0.0 ? 0.0 : nl.beta * bvp.k_nodal[i] * nl.m2 * std::pow(T[i], nl.m2 - 1.0);
  }
  return dk;
}

Eigen::VectorXd residual(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  return bvp.space->stiffness().apply(effective_conductivity(bvp, T), T) - load_vector(bvp);
}

Eigen::VectorXd residual_vjp(const ThermalBVP& bvp, const Eigen::VectorXd& T,
                             const Eigen::VectorXd& w) {
  const auto& ops = bvp.space->stiffness();
  Eigen::VectorXd out = ops.apply(effective_conductivity(bvp, T), w);
  if (bvp.nonlinear) {
    out.array() += conductivity_derivative(bvp, T).array() * ops.coefficient_vjp(T, w).array();
  }
  return out;
}

SparseMatrix tangent(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  const auto& ops = bvp.space->stiffness();
  SparseMatrix Kt = ops.assemble(effective_conductivity(bvp, T));
  if (bvp.nonlinear) {
    const Eigen::VectorXd dk = conductivity_derivative(bvp, T);
    Kt += ops.assemble_coefficient_tangent(T) * dk.asDiagonal();
  }
  return Kt;
}

SparseMatrix conductivity_tangent(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  return bvp.space->stiffness().assemble_coefficient_tangent(T);
}

Eigen::VectorXd solve_linear(const ThermalBVP& bvp) {
  const AssembledSystem sys = assemble(bvp);
  return solve_constrained(sys.K, sys.f, sys.dofs);
}

NewtonResult solve_newton(const ThermalBVP& bvp, double tol, int max_iter) {
  bvp.validate();
  if (!bvp.nonlinear) {
    return {solve_linear(bvp), {0.0}};
  }
  const DofPartition part(bvp.num_nodes(), bvp.dirichlet);
  const auto& nl = *bvp.nonlinear;

  // Initial guess: linear problem with k frozen at the mean boundary temperature.
  const double t_mean = part.fixed_values().mean();
  ThermalBVP lin = bvp;
  lin.nonlinear.reset();
  lin.k_nodal = (nl.m1 + nl.beta * bvp.k_nodal.array() * std::pow(t_mean, nl.m2)).matrix();
  return newton_solve([&](const Eigen::VectorXd& T) { return residual(bvp, T); },
                      [&](const Eigen::VectorXd& T) { return tangent(bvp, T); }, part,
                      solve_linear(lin), tol, max_iter);
}

Eigen::MatrixX2d recover_flux(const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  return recover_flux(bvp.mesh(), effective_conductivity(bvp, T), T);
}

Eigen::MatrixX2d recover_flux(const Mesh& mesh, const Eigen::VectorXd& k, const Eigen::VectorXd& T) {
  Eigen::MatrixX2d q = Eigen::MatrixX2d::Zero(mesh.num_nodes(), 2);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(mesh.num_nodes());
  static constexpr std::array<std::array<double, 2>, 4> corners{
      {{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}};
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& c = mesh.element(e);
    Eigen::Vector4d Te;
    Eigen::Vector4d ke;
    for (int a = 0; a < 4; ++a) {
      Te[a] = T[c[a]];
      ke[a] = k[c[a]];
    }
    for (int a = 0; a < 4; ++a) {
      const ShapeEval s = shape_eval(mesh, e, corners[a][0], corners[a][1]);
      const Eigen::Vector2d flux = -s.N.dot(ke) * (s.B * Te);
      q.row(c[a]) += flux.transpose();
      count[c[a]] += 1.0;
    }
  }
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (count[n] > 0) q.row(n) /= count[n];
  }
  return q;
}

double relative_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& ref) {
  if (pred.size() != ref.size()) throw ConfigError("relative_error: length mismatch");
  const double denom = ref.norm();
  if (!(denom > 0.0)) throw ConfigError("relative_error: reference has zero norm");
  return 100.0 * (pred - ref).norm() / denom;
}

}  // namespace fol
