#include "fol/sensitivity.hpp"

#include <algorithm>
#include <ostream>

#include "fol/error.hpp"

namespace fol {

ResponseFunction parse_response(const std::string& name) {
  if (name == "flux_y_sq") return ResponseFunction::flux_y();
  if (name == "flux_x_sq_minus_offset") return ResponseFunction::flux_x_constraint();
  throw ConfigError("unknown response '" + name + "' (expected flux_y_sq or flux_x_sq_minus_offset)");
}

std::string to_string(const ResponseFunction& rf) {
  return rf.kind == ResponseKind::FluxYSq ? "flux_y_sq" : "flux_x_sq_minus_offset";
}

namespace {

int axis(const ResponseFunction& rf) { return rf.kind == ResponseKind::FluxYSq ? 1 : 0; }

void check_sizes(const ThermalSpace& space, const Eigen::VectorXd& k, const Eigen::VectorXd& T) {
  const int n = space.mesh().num_nodes();
  if (k.size() != n || T.size() != n) throw ConfigError("response: field sizes do not match the mesh");
}

const ThermalBVP& linear_only(const ThermalBVP& bvp) {
  bvp.validate();
  if (bvp.nonlinear) throw ConfigError("sensitivities are implemented for linear conductivity only");
  return bvp;
}

}  // namespace

double eval_response(const ResponseFunction& rf, const ThermalSpace& space, const Eigen::VectorXd& k,
                     const Eigen::VectorXd& T) {
  check_sizes(space, k, T);
  const Mesh& mesh = space.mesh();
  const int ax = axis(rf);
  double J = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& c = mesh.element(e);
    const Eigen::Vector4d Te(T[c[0]], T[c[1]], T[c[2]], T[c[3]]);
    const Eigen::Vector4d ke(k[c[0]], k[c[1]], k[c[2]], k[c[3]]);
    for (const auto& g : space.geometry()[static_cast<std::size_t>(e)]) {
      const double q = g.shape.N.dot(ke) * g.shape.B.row(ax).dot(Te);
      J += g.weight_detj * q * q;
    }
  }
  return rf.kind == ResponseKind::FluxXSqMinusOffset ? J - rf.offset : J;
}

double eval_response(const ResponseFunction& rf, const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  return eval_response(rf, *bvp.space, effective_conductivity(bvp, T), T);
}

ResponsePartials partials(const ResponseFunction& rf, const ThermalSpace& space, const Eigen::VectorXd& k,
                          const Eigen::VectorXd& T) {
  check_sizes(space, k, T);
  const Mesh& mesh = space.mesh();
  const int ax = axis(rf);
  ResponsePartials p{Eigen::VectorXd::Zero(T.size()), Eigen::VectorXd::Zero(T.size())};
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& c = mesh.element(e);
    const Eigen::Vector4d Te(T[c[0]], T[c[1]], T[c[2]], T[c[3]]);
    const Eigen::Vector4d ke(k[c[0]], k[c[1]], k[c[2]], k[c[3]]);
    Eigen::Vector4d gT = Eigen::Vector4d::Zero();
    Eigen::Vector4d gk = Eigen::Vector4d::Zero();
    for (const auto& g : space.geometry()[static_cast<std::size_t>(e)]) {
      const double kq = g.shape.N.dot(ke);
      const double grad = g.shape.B.row(ax).dot(Te);
      gT += (2.0 * g.weight_detj * kq * kq * grad) * g.shape.B.row(ax).transpose();
      gk += (2.0 * g.weight_detj * kq * grad * grad) * g.shape.N;
    }
    for (int a = 0; a < 4; ++a) {
      p.dT[c[a]] += gT[a];
      p.dk[c[a]] += gk[a];
    }
  }
  return p;
}

ResponsePartials partials(const ResponseFunction& rf, const ThermalBVP& bvp, const Eigen::VectorXd& T) {
  return partials(rf, *bvp.space, effective_conductivity(bvp, T), T);
}

std::vector<Eigen::VectorXd> adjoint_sensitivities(const std::vector<ResponseFunction>& rfs,
                                                   const ThermalBVP& bvp, const Eigen::VectorXd& T,
                                                   const Eigen::MatrixXd& A) {
  linear_only(bvp);
  if (A.rows() != bvp.num_nodes()) throw ConfigError("design tangent A must have one row per node");
  const AssembledSystem sys = assemble(bvp);
  const ReducedSolver solver(sys.K, sys.dofs);
  const SparseMatrix D = conductivity_tangent(bvp, T);

  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(sys.dofs.free().size()), static_cast<Eigen::Index>(rfs.size()));
  std::vector<ResponsePartials> parts;
  for (std::size_t i = 0; i < rfs.size(); ++i) {
    parts.push_back(partials(rfs[i], bvp, T));
    rhs.col(static_cast<Eigen::Index>(i)) = -sys.dofs.gather_free(parts.back().dT);
  }
  const Eigen::MatrixXd lambda_f = solver.solve(rhs);  // K_ff symmetric

  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < rfs.size(); ++i) {
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(bvp.num_nodes());
    const auto& fr = sys.dofs.free();
    for (std::size_t j = 0; j < fr.size(); ++j) lambda[fr[j]] = lambda_f(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    const Eigen::VectorXd dk_total = D.transpose() * lambda + parts[i].dk;
    out.push_back(A.transpose() * dk_total);
  }
  return out;
}

Eigen::VectorXd adjoint_sensitivity(const ResponseFunction& rf, const ThermalBVP& bvp,
                                    const Eigen::VectorXd& T, const Eigen::MatrixXd& A) {
  return adjoint_sensitivities({rf}, bvp, T, A).front();
}

Eigen::VectorXd direct_sensitivity(const ResponseFunction& rf, const ThermalBVP& bvp,
                                   const Eigen::VectorXd& T, const Eigen::MatrixXd& A) {
  linear_only(bvp);
  if (A.rows() != bvp.num_nodes()) throw ConfigError("design tangent A must have one row per node");
  const AssembledSystem sys = assemble(bvp);
  const ReducedSolver solver(sys.K, sys.dofs);
  const Eigen::MatrixXd DA = conductivity_tangent(bvp, T) * A;
  Eigen::MatrixXd DA_f(static_cast<Eigen::Index>(sys.dofs.free().size()), A.cols());
  const auto& fr = sys.dofs.free();
  for (std::size_t j = 0; j < fr.size(); ++j) DA_f.row(static_cast<Eigen::Index>(j)) = DA.row(fr[j]);
  const Eigen::MatrixXd X = -solver.solve(DA_f);

  const ResponsePartials p = partials(rf, bvp, T);
  Eigen::VectorXd out = A.transpose() * p.dk;
  for (std::size_t j = 0; j < fr.size(); ++j) out += p.dT[fr[j]] * X.row(static_cast<Eigen::Index>(j)).transpose();
  return out;
}

Eigen::VectorXd fol_sensitivity(const ResponseFunction& rf, const Mlp& net, const FolSample& sample,
                                const LossWeights& w, const ThermalSpace& space) {
  if (sample.nonlinear) throw ConfigError("sensitivities are implemented for linear conductivity only");
  const Tape tape(net, sample.input, true);
  const Eigen::VectorXd T = network_to_state(sample, w, tape.value(0));
  const Eigen::MatrixXd dT = network_to_state_tangent(sample, w, tape.jacobian(0));
  const ResponsePartials p = partials(rf, space, sample.coef, T);
  Eigen::VectorXd out = dT.transpose() * p.dT;
  if (sample.coef_tangent.cols() > 0) out += sample.coef_tangent.transpose() * p.dk;
  return out;
}

double relative_difference(const Eigen::VectorXd& reference, const Eigen::VectorXd& other) {
  if (reference.size() != other.size()) throw ConfigError("relative_difference: size mismatch");
  const double n = reference.norm();
  if (!(n > 0.0)) throw ConfigError("relative_difference: reference has zero norm");
  return (reference - other).norm() / n;
}

Eigen::VectorXd entrywise_relative_error(const Eigen::VectorXd& reference, const Eigen::VectorXd& other) {
  if (reference.size() != other.size()) throw ConfigError("entrywise_relative_error: size mismatch");
  const double floor = 1e-12 * reference.cwiseAbs().maxCoeff();
  Eigen::VectorXd e(reference.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double d = std::max(std::abs(reference[i]), floor);
    e[i] = d > 0.0 ? std::abs(reference[i] - other[i]) / d : std::abs(other[i]);
  }
  return e;
}

void write_sensitivity_csv(const SensitivityTable& t, std::ostream& os) {
  if (t.names.size() != t.columns.size()) throw ConfigError("sensitivity table: names and columns differ");
  os << "c_index";
  for (const auto& n : t.names) os << ',' << n;
  os << '\n';
  const Eigen::Index rows = t.columns.empty() ? 0 : t.columns.front().size();
  os.precision(17);
  for (Eigen::Index i = 0; i < rows; ++i) {
    os << i;
    for (const auto& c : t.columns) os << ',' << c[i];
    os << '\n';
  }
}

void write_nodal_sensitivity_csv(const Mesh& mesh, const Eigen::VectorXd& dJ_dk, std::ostream& os) {
  os << "node_id,x,y,dJ_dk\n";
  os.precision(17);
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    os << n << ',' << mesh.node(n).x << ',' << mesh.node(n).y << ',' << dJ_dk[n] << '\n';
  }
}

}  // namespace fol
