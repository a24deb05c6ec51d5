#include "fol/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fol/error.hpp"

namespace fol {

PhysicsLoss parse_physics_loss(const std::string& name) {
  if (name == "energy") return PhysicsLoss::Energy;
  if (name == "residual") return PhysicsLoss::Residual;
  throw ConfigError("unknown physics loss '" + name + "' (expected energy or residual)");
}

std::string to_string(PhysicsLoss p) { return p == PhysicsLoss::Energy ? "energy" : "residual"; }

void LossWeights::validate() const {
  if (w_ph < 0.0 || w_bc < 0.0 || w_se < 0.0 || w_db < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  const double bc = hard_bc ? 0.0 : w_bc;
  if (!(w_ph > 0.0 || bc > 0.0 || w_se > 0.0)) throw ConfigError("at least one loss weight must be positive");
  if (!hard_bc && !(w_bc > 0.0 && w_db > 0.0))
    throw ConfigError("soft Dirichlet conditions need w_bc > 0 and w_db > 0");
}

void FolSample::validate() const {
  if (!op) throw ConfigError("sample has no stiffness operator");
  const int n = op->num_dofs();
  const int m = static_cast<int>(input.size());
  if (dofs.num_dofs() != n) throw ConfigError("sample DOF partition does not match the operator");
  if (coef.size() != op->num_nodes()) throw ConfigError("sample coefficient field has the wrong size");
  if (load.size() != n) throw ConfigError("sample load vector has the wrong size");
  if (coef_tangent.cols() != 0 && (coef_tangent.rows() != coef.size() || coef_tangent.cols() != m)) {
    throw ConfigError("coefficient tangent must be nodes x inputs");
  }
  if (load_tangent.cols() != 0 && (load_tangent.rows() != n || load_tangent.cols() != m)) {
    throw ConfigError("load tangent must be dofs x inputs");
  }
  if (fixed_tangent.cols() != 0 &&
      (fixed_tangent.rows() != static_cast<Eigen::Index>(dofs.fixed().size()) || fixed_tangent.cols() != m)) {
    throw ConfigError("prescribed-value tangent must be fixed dofs x inputs");
  }
}

FolSample thermal_sample(const ThermalBVP& bvp, Eigen::VectorXd input, Eigen::MatrixXd coef_tangent,
                         Eigen::MatrixXd load_tangent) {
  bvp.validate();
  FolSample s;
  s.input = std::move(input);
  s.op = std::shared_ptr<const StiffnessOperator>(bvp.space, &bvp.space->stiffness());
  s.coef = bvp.k_nodal;
  s.coef_tangent = std::move(coef_tangent);
  s.load = load_vector(bvp);
  s.load_tangent = std::move(load_tangent);
  s.dofs = DofPartition(bvp.num_nodes(), bvp.dirichlet);
  s.nonlinear = bvp.nonlinear;
  s.validate();
  return s;
}

FolSample fourier_conductivity_sample(const std::shared_ptr<const ThermalSpace>& space,
                                      const FourierDesign& design, double t_left, double t_right) {
  NodalField k = design_to_nodal(design, space->mesh());
  const ThermalBVP bvp = make_thermal_bvp(space, k.values, t_left, t_right);
  return thermal_sample(bvp, design.c, std::move(k.tangent));
}

FolSample fourier_source_sample(const std::shared_ptr<const ThermalSpace>& space,
                                const FourierDesign& source_design, const ProjectionSpec& q_spec,
                                const Eigen::VectorXd& k_nodal, double t_boundary) {
  const Mesh& mesh = space->mesh();
  const NodalField q = source_field(source_design, mesh, q_spec);
  ThermalBVP bvp;
  bvp.space = space;
  bvp.k_nodal = k_nodal;
  bvp.q_source = q.values;
  for (Edge e : {Edge::Left, Edge::Right, Edge::Bottom, Edge::Top}) {
    const auto d = edge_dirichlet(mesh, e, t_boundary);
    bvp.dirichlet.insert(bvp.dirichlet.end(), d.begin(), d.end());
  }
  return thermal_sample(bvp, source_design.c, {}, space->mass() * q.tangent);
}

FolSample elastic_bc_sample(const std::shared_ptr<const ElasticSpace>& space,
                            const Eigen::VectorXd& E_nodal, double ux, double uy) {
  const ElasticBVP bvp = make_top_displacement_bvp(space, E_nodal, ux, uy);
  bvp.validate();
  FolSample s;
  s.input = Eigen::Vector2d(ux, uy);
  s.op = std::shared_ptr<const StiffnessOperator>(space, &space->stiffness());
  s.coef = E_nodal;
  s.load = elastic_load(bvp);
  s.dofs = DofPartition(bvp.num_dofs(), bvp.dirichlet);
  const auto top = space->mesh().edge_nodes(Edge::Top);
  s.fixed_tangent = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.dofs.fixed().size()), 2);
  for (std::size_t i = 0; i < s.dofs.fixed().size(); ++i) {
    const int dof = s.dofs.fixed()[i];
    if (std::binary_search(top.begin(), top.end(), dof / 2)) {
      s.fixed_tangent(static_cast<Eigen::Index>(i), dof % 2) = 1.0;
    }
  }
  s.validate();
  return s;
}

namespace {

Eigen::VectorXd conductivity_impl(const FolSample& s, const Eigen::VectorXd& T) {
  if (!s.nonlinear) return s.coef;
  const auto& nl = *s.nonlinear;
  Eigen::VectorXd k(T.size());
  for (Eigen::Index i = 0; i < T.size(); ++i) k[i] = nl.m1 + nl.beta * s.coef[i] * std::pow(T[i], nl.m2);
  return k;
}

Eigen::VectorXd conductivity_slope(const FolSample& s, const Eigen::VectorXd& T) {
  const auto& nl = *s.nonlinear;
  Eigen::VectorXd dk(T.size());
  for (Eigen::Index i = 0; i < T.size(); ++i) {
    dk[i] = nl.m2 == 0.0 ? 0.0 : nl.beta * s.coef[i] * nl.m2 * std::pow(T[i], nl.m2 - 1.0);
  }
  return dk;
}

// (dr/dT)^T w; K(k) is symmetric.
Eigen::VectorXd residual_vjp(const FolSample& s, const Eigen::VectorXd& T, const Eigen::VectorXd& w) {
  Eigen::VectorXd out = s.op->apply(conductivity_impl(s, T), w);
  if (s.nonlinear) out.array() += conductivity_slope(s, T).array() * s.op->coefficient_vjp(T, w).array();
  return out;
}

void zero_fixed_rows(const DofPartition& dofs, Eigen::VectorXd& v) {
  for (int i : dofs.fixed()) v[i] = 0.0;
}

void zero_fixed_rows(const DofPartition& dofs, Eigen::MatrixXd& M) {
  for (int i : dofs.fixed()) M.row(i).setZero();
}

void check_finite(const char* term, double v) {
  if (!std::isfinite(v)) throw NonFiniteLossError(term, v);
}

}  // namespace

Eigen::VectorXd sample_conductivity(const FolSample& s, const Eigen::VectorXd& T) {
  return conductivity_impl(s, T);
}

Eigen::VectorXd sample_residual(const FolSample& s, const Eigen::VectorXd& T) {
  return s.op->apply(conductivity_impl(s, T), T) - s.load;
}

Eigen::VectorXd reference_solution(const FolSample& s) {
  if (!s.nonlinear) return solve_constrained(s.op->assemble(s.coef), s.load, s.dofs);
  const auto& nl = *s.nonlinear;
  const double t_mean = s.dofs.fixed_values().mean();
  const Eigen::VectorXd k0 = (nl.m1 + nl.beta * s.coef.array() * std::pow(t_mean, nl.m2)).matrix();
  Eigen::VectorXd T0 = solve_constrained(s.op->assemble(k0), s.load, s.dofs);
  return newton_solve([&](const Eigen::VectorXd& T) { return sample_residual(s, T); },
                      [&](const Eigen::VectorXd& T) {
                        SparseMatrix Kt = s.op->assemble(conductivity_impl(s, T));
                        Kt += s.op->assemble_coefficient_tangent(T) * conductivity_slope(s, T).asDiagonal();
                        return Kt;
                      },
                      s.dofs, std::move(T0), 1e-10, 50)
      .T;
}

double loss_energy(const FolSample& s, const Eigen::VectorXd& T) {
  if (s.nonlinear) throw ConfigError("the energy loss needs a linear problem; use the residual loss");
  return 0.5 * T.dot(s.op->apply(s.coef, T)) - T.dot(s.load);
}

double loss_residual(const FolSample& s, const Eigen::VectorXd& T) {
  Eigen::VectorXd r = sample_residual(s, T);
  zero_fixed_rows(s.dofs, r);
  return r.squaredNorm();
}

double loss_dirichlet(const FolSample& s, const Eigen::VectorXd& T, double w_db) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.dofs.fixed().size(); ++i) {
    const double d = T[s.dofs.fixed()[i]] - s.dofs.fixed_values()[static_cast<Eigen::Index>(i)];
    acc += d * d;
  }
  return w_db * acc;
}

Eigen::MatrixXd residual_design_derivative(const FolSample& s, const Eigen::VectorXd& T,
                                           const Eigen::MatrixXd& dT_dc) {
  if (s.nonlinear) throw ConfigError("the sensitivity loss is implemented for linear problems only");
  Eigen::MatrixXd S;
  s.op->apply(s.coef, dT_dc, S);
  if (s.coef_tangent.cols() > 0) {
    Eigen::MatrixXd DA;
    s.op->apply_coefficient_tangent(T, s.coef_tangent, DA);
    S += DA;
  }
  if (s.load_tangent.cols() > 0) S -= s.load_tangent;
  zero_fixed_rows(s.dofs, S);
  return S;
}

double loss_sensitivity(const FolSample& s, const Eigen::VectorXd& T, const Eigen::MatrixXd& dT_dc) {
  return residual_design_derivative(s, T, dT_dc).squaredNorm();
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  total += o.total;
  physics += o.physics;
  boundary += o.boundary;
  sensitivity += o.sensitivity;
  return *this;
}

LossTerms& LossTerms::operator*=(double a) {
  total *= a;
  physics *= a;
  boundary *= a;
  sensitivity *= a;
  return *this;
}

int network_output_size(const FolSample& s, const LossWeights& w) {
  return w.hard_bc ? static_cast<int>(s.dofs.free().size()) : s.num_dofs();
}

Eigen::VectorXd network_to_state(const FolSample& s, const LossWeights& w, const Eigen::VectorXd& out) {
  if (out.size() != network_output_size(s, w)) throw ConfigError("network output size does not match the sample");
  return w.hard_bc ? scatter(out, s.dofs) : out;
}

Eigen::MatrixXd network_to_state_tangent(const FolSample& s, const LossWeights& w,
                                         const Eigen::MatrixXd& jac) {
  if (!w.hard_bc) return jac;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(s.num_dofs(), jac.cols());
  const auto& fr = s.dofs.free();
  for (std::size_t i = 0; i < fr.size(); ++i) full.row(fr[i]) = jac.row(static_cast<Eigen::Index>(i));
  if (s.fixed_tangent.cols() > 0) {
    const auto& fx = s.dofs.fixed();
    for (std::size_t i = 0; i < fx.size(); ++i) full.row(fx[i]) = s.fixed_tangent.row(static_cast<Eigen::Index>(i));
  }
  return full;
}

LossTerms sample_loss(const FolSample& s, const LossWeights& w, const Eigen::VectorXd& out,
                      const Eigen::MatrixXd* jac, Eigen::VectorXd* out_adjoint,
                      Eigen::MatrixXd* jac_adjoint) {
  const Eigen::VectorXd T = network_to_state(s, w, out);
  const bool grad = out_adjoint != nullptr;
  Eigen::VectorXd gT;  // d total / d T, all DOFs
  if (grad) gT = Eigen::VectorXd::Zero(T.size());
  LossTerms t;

  if (w.w_ph > 0.0) {
    if (w.physics == PhysicsLoss::Energy) {
      if (s.nonlinear) throw ConfigError("the energy loss needs a linear problem; use the residual loss");
      const Eigen::VectorXd KT = s.op->apply(s.coef, T);
      t.physics = 0.5 * T.dot(KT) - T.dot(s.load);
      if (grad) gT += w.w_ph * (KT - s.load);
    } else {
      Eigen::VectorXd r = sample_residual(s, T);
      zero_fixed_rows(s.dofs, r);
      t.physics = r.squaredNorm();
      if (grad) gT += (2.0 * w.w_ph) * residual_vjp(s, T, r);
    }
    check_finite("L_ph", t.physics);
  }

  if (!w.hard_bc && w.w_bc > 0.0) {
    t.boundary = loss_dirichlet(s, T, w.w_db);
    check_finite("L_bc", t.boundary);
    if (grad) {
      for (std::size_t i = 0; i < s.dofs.fixed().size(); ++i) {
        const int d = s.dofs.fixed()[i];
        gT[d] += 2.0 * w.w_bc * w.w_db * (T[d] - s.dofs.fixed_values()[static_cast<Eigen::Index>(i)]);
      }
    }
  }

  if (w.w_se > 0.0) {
    if (jac == nullptr) throw ConfigError("the sensitivity loss needs the network Jacobian");
    const Eigen::MatrixXd dT = network_to_state_tangent(s, w, *jac);
    const Eigen::MatrixXd S = residual_design_derivative(s, T, dT);
    t.sensitivity = S.squaredNorm();
    check_finite("L_se", t.sensitivity);
    if (grad) {
      const Eigen::MatrixXd R = (2.0 * w.w_se) * S;
      Eigen::MatrixXd gJ;
      s.op->apply(s.coef, R, gJ);  // K symmetric
      if (s.coef_tangent.cols() > 0) {
        Eigen::VectorXd gc;
        s.op->contract_coefficient_tangent(s.coef_tangent, R, gc);
        gT += gc;
      }
      if (jac_adjoint != nullptr) {
        if (w.hard_bc) {
          const auto& fr = s.dofs.free();
          jac_adjoint->resize(static_cast<Eigen::Index>(fr.size()), gJ.cols());
          for (std::size_t i = 0; i < fr.size(); ++i) jac_adjoint->row(static_cast<Eigen::Index>(i)) = gJ.row(fr[i]);
        } else {
          *jac_adjoint = gJ;
        }
      }
    }
  }

  t.total = w.w_ph * t.physics + (w.hard_bc ? 0.0 : w.w_bc * t.boundary) + w.w_se * t.sensitivity;
  check_finite("L_total", t.total);
  if (grad) *out_adjoint = w.hard_bc ? s.dofs.gather_free(gT) : gT;
  return t;
}

BatchLoss total_loss(const Mlp& net, const std::vector<FolSample>& samples, const std::vector<int>& batch,
                     const LossWeights& w, bool with_grad, int threads) {
  w.validate();
  BatchLoss out;
  if (batch.empty()) {
    if (with_grad) out.grad = Eigen::VectorXd::Zero(net.num_params());
    return out;
  }
  Eigen::MatrixXd C(net.input_size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const FolSample& s = samples.at(static_cast<std::size_t>(batch[b]));
    if (s.input.size() != net.input_size()) throw ConfigError("sample input size does not match the network");
    if (network_output_size(s, w) != net.output_size()) {
      throw ConfigError("sample DOF count does not match the network output");
    }
    C.col(static_cast<Eigen::Index>(b)) = s.input;
  }
  const bool with_jac = w.w_se > 0.0;
  std::vector<LossTerms> per(batch.size());
  const double inv = 1.0 / static_cast<double>(batch.size());

  auto fn = [&](int b, const Eigen::VectorXd& v, const Eigen::MatrixXd* jac, Eigen::VectorXd& vbar,
                Eigen::MatrixXd* jbar) {
    const FolSample& s = samples[static_cast<std::size_t>(batch[static_cast<std::size_t>(b)])];
    LossTerms t = sample_loss(s, w, v, jac, with_grad ? &vbar : nullptr, with_grad ? jbar : nullptr);
    if (with_grad) {
      vbar *= inv;
      if (jbar != nullptr) *jbar *= inv;
    }
    per[static_cast<std::size_t>(b)] = t;
    return t.total * inv;
  };

  if (with_grad) {
    LossGradient lg = loss_gradient(net, C, with_jac, fn, threads);
    out.grad = std::move(lg.grad);
  } else {
    const Tape tape(net, C, with_jac);
    Eigen::VectorXd dummy;
    for (int b = 0; b < tape.batch(); ++b) {
      Eigen::MatrixXd jac;
      if (with_jac) jac = tape.jacobian(b);
      fn(b, tape.value(b), with_jac ? &jac : nullptr, dummy, nullptr);
    }
  }
  for (const auto& t : per) out.terms += t;
  out.terms *= inv;
  return out;
}

BatchLoss total_loss(const Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                     bool with_grad, int threads) {
  std::vector<int> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return total_loss(net, samples, all, w, with_grad, threads);
}

}  // namespace fol
