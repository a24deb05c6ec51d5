#include "fol/fem.hpp"

#include <atomic>
#include <cmath>
#include <memory>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "fol/error.hpp"

namespace fol {

namespace {
std::atomic<std::uint64_t> g_factorizations{0};
}

std::uint64_t factorization_count() noexcept { return g_factorizations.load(); }

DofPartition::DofPartition(int num_dofs, const std::vector<DirichletValue>& dirichlet)
    : num_dofs_(num_dofs), slot_(static_cast<std::size_t>(num_dofs), 0) {
  std::vector<double> value(static_cast<std::size_t>(num_dofs), 0.0);
  std::vector<char> fixed(static_cast<std::size_t>(num_dofs), 0);
  for (const auto& d : dirichlet) {
    if (d.dof < 0 || d.dof >= num_dofs) {
      throw ConfigError("Dirichlet DOF " + std::to_string(d.dof) + " out of range");
    }
    auto& flag = fixed[static_cast<std::size_t>(d.dof)];
    if (flag && value[static_cast<std::size_t>(d.dof)] != d.value) {
      throw ConfigError("conflicting Dirichlet values on DOF " + std::to_string(d.dof));
    }
    flag = 1;
    value[static_cast<std::size_t>(d.dof)] = d.value;
  }
  std::vector<double> fv;
  for (int i = 0; i < num_dofs; ++i) {
    if (fixed[static_cast<std::size_t>(i)]) {
      slot_[static_cast<std::size_t>(i)] = -static_cast<int>(fixed_.size()) - 1;
      fixed_.push_back(i);
      fv.push_back(value[static_cast<std::size_t>(i)]);
    } else {
      slot_[static_cast<std::size_t>(i)] = static_cast<int>(free_.size());
      free_.push_back(i);
    }
  }
  fixed_values_ = Eigen::Map<Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(fv.size()));
}

Eigen::VectorXd DofPartition::free_mask() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(num_dofs_);
  for (int i : free_) m[i] = 1.0;
  return m;
}

Eigen::VectorXd DofPartition::gather_free(const Eigen::VectorXd& full) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t i = 0; i < free_.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[free_[i]];
  return out;
}

Eigen::VectorXd DofPartition::scatter(const Eigen::VectorXd& free_values) const {
  if (free_values.size() != static_cast<Eigen::Index>(free_.size())) {
    throw ConfigError("scatter: expected " + std::to_string(free_.size()) + " free values, got " +
                      std::to_string(free_values.size()));
  }
  Eigen::VectorXd full(num_dofs_);
  for (std::size_t i = 0; i < free_.size(); ++i) full[free_[i]] = free_values[static_cast<Eigen::Index>(i)];
  for (std::size_t i = 0; i < fixed_.size(); ++i) full[fixed_[i]] = fixed_values_[static_cast<Eigen::Index>(i)];
  return full;
}

Eigen::VectorXd StiffnessOperator::apply(const Eigen::VectorXd& coef,
                                         const Eigen::VectorXd& v) const {
  Eigen::MatrixXd out;
  apply(coef, Eigen::MatrixXd(v), out);
  return out.col(0);
}

template <int Dofs>
ElementTables<Dofs>::ElementTables(int num_nodes, std::vector<std::array<int, 4>> coef_nodes,
                                   std::vector<std::array<int, Dofs>> dofs,
                                   std::vector<std::array<ElemMatrix, 4>> basis)
    : num_nodes_(num_nodes),
      num_dofs_(0),
      coef_nodes_(std::move(coef_nodes)),
      dofs_(std::move(dofs)),
      basis_(std::move(basis)) {
  if (coef_nodes_.size() != dofs_.size() || basis_.size() != dofs_.size()) {
    throw ConfigError("ElementTables: inconsistent element counts");
  }
  for (const auto& d : dofs_) {
    for (int i : d) num_dofs_ = std::max(num_dofs_, i + 1);
  }
}

template <int Dofs>
typename ElementTables<Dofs>::ElemMatrix ElementTables<Dofs>::element_matrix(
    int e, const Eigen::VectorXd& coef) const {
  const auto& nodes = coef_nodes_[static_cast<std::size_t>(e)];
  const auto& b = basis_[static_cast<std::size_t>(e)];
  ElemMatrix K = coef[nodes[0]] * b[0];
  for (int a = 1; a < 4; ++a) K += coef[nodes[a]] * b[a];
  return K;
}

// The block kernels below work on transposed copies so that the values of
// one DOF are contiguous (one column per DOF), and reuse fixed buffers.

template <int Dofs>
void ElementTables<Dofs>::apply(const Eigen::VectorXd& coef, const Eigen::MatrixXd& V,
                                Eigen::MatrixXd& out) const {
  const Eigen::Index cols = V.cols();
  const Eigen::MatrixXd Vt = V.transpose();
  Eigen::MatrixXd Ot = Eigen::MatrixXd::Zero(cols, num_dofs_);
  Eigen::Matrix<double, Eigen::Dynamic, Dofs> Ve(cols, Dofs);
  Eigen::Matrix<double, Eigen::Dynamic, Dofs> Re(cols, Dofs);
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    for (int i = 0; i < Dofs; ++i) Ve.col(i) = Vt.col(d[i]);
    const ElemMatrix K = element_matrix(e, coef);
    Re.noalias() = Ve * K.transpose();
    for (int i = 0; i < Dofs; ++i) Ot.col(d[i]) += Re.col(i);
  }
  out = Ot.transpose();
}

template <int Dofs>
void ElementTables<Dofs>::apply_coefficient_tangent(const Eigen::VectorXd& t,
                                                    const Eigen::MatrixXd& A,
                                                    Eigen::MatrixXd& out) const {
  const Eigen::Index m = A.cols();
  const Eigen::MatrixXd At = A.transpose();
  Eigen::MatrixXd Ot = Eigen::MatrixXd::Zero(m, num_dofs_);
  ElemVector te;
  Eigen::Matrix<double, 4, Dofs> vt;
  Eigen::Matrix<double, Eigen::Dynamic, 4> Ae(m, 4);
  Eigen::Matrix<double, Eigen::Dynamic, Dofs> Re(m, Dofs);
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    const auto& nodes = coef_nodes_[static_cast<std::size_t>(e)];
    const auto& b = basis_[static_cast<std::size_t>(e)];
    for (int i = 0; i < Dofs; ++i) te[i] = t[d[i]];
    for (int a = 0; a < 4; ++a) {
      vt.row(a) = (b[a] * te).transpose();
      Ae.col(a) = At.col(nodes[a]);
    }
    Re.noalias() = Ae * vt;
    for (int i = 0; i < Dofs; ++i) Ot.col(d[i]) += Re.col(i);
  }
  out = Ot.transpose();
}

template <int Dofs>
void ElementTables<Dofs>::contract_coefficient_tangent(const Eigen::MatrixXd& A,
                                                       const Eigen::MatrixXd& R,
                                                       Eigen::VectorXd& out) const {
  out.setZero(num_dofs_);
  const Eigen::MatrixXd At = A.transpose();
  const Eigen::MatrixXd Rt = R.transpose();
  Eigen::Matrix<double, Eigen::Dynamic, Dofs> Re(R.cols(), Dofs);
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    const auto& nodes = coef_nodes_[static_cast<std::size_t>(e)];
    const auto& b = basis_[static_cast<std::size_t>(e)];
    for (int i = 0; i < Dofs; ++i) Re.col(i) = Rt.col(d[i]);
    ElemVector acc = ElemVector::Zero();
    for (int a = 0; a < 4; ++a) {
      const ElemVector w = Re.transpose() * At.col(nodes[a]);
      acc.noalias() += b[a] * w;
    }
    for (int i = 0; i < Dofs; ++i) out[d[i]] += acc[i];
  }
}

template <int Dofs>
Eigen::VectorXd ElementTables<Dofs>::coefficient_vjp(const Eigen::VectorXd& t,
                                                     const Eigen::VectorXd& w) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_nodes_);
  ElemVector te;
  ElemVector we;
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    const auto& nodes = coef_nodes_[static_cast<std::size_t>(e)];
    const auto& b = basis_[static_cast<std::size_t>(e)];
    for (int i = 0; i < Dofs; ++i) {
      te[i] = t[d[i]];
      we[i] = w[d[i]];
    }
    for (int a = 0; a < 4; ++a) out[nodes[a]] += we.dot(b[a] * te);
  }
  return out;
}

template <int Dofs>
SparseMatrix ElementTables<Dofs>::assemble(const Eigen::VectorXd& coef) const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(num_elements()) * Dofs * Dofs);
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    const ElemMatrix K = element_matrix(e, coef);
    for (int i = 0; i < Dofs; ++i) {
      for (int j = 0; j < Dofs; ++j) trip.emplace_back(d[i], d[j], K(i, j));
    }
  }
  SparseMatrix K(num_dofs_, num_dofs_);
  // Duplicates are summed in triplet (element) order, so the result is
  // independent of how the element loop is scheduled.
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

template <int Dofs>
SparseMatrix ElementTables<Dofs>::assemble_coefficient_tangent(const Eigen::VectorXd& t) const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(num_elements()) * Dofs * 4);
  ElemVector te;
  for (int e = 0; e < num_elements(); ++e) {
    const auto& d = dofs_[static_cast<std::size_t>(e)];
    const auto& nodes = coef_nodes_[static_cast<std::size_t>(e)];
    const auto& b = basis_[static_cast<std::size_t>(e)];
    for (int i = 0; i < Dofs; ++i) te[i] = t[d[i]];
    for (int a = 0; a < 4; ++a) {
      const ElemVector v = b[a] * te;
      for (int i = 0; i < Dofs; ++i) trip.emplace_back(d[i], nodes[a], v[i]);
    }
  }
  SparseMatrix D(num_dofs_, num_nodes_);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

template class ElementTables<4>;
template class ElementTables<8>;

SparseMatrix free_block(const SparseMatrix& K, const DofPartition& part) {
  const auto& free = part.free();
  std::vector<int> slot(static_cast<std::size_t>(K.rows()), -1);
  for (std::size_t i = 0; i < free.size(); ++i) slot[static_cast<std::size_t>(free[i])] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < K.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(K, c); it; ++it) {
      const int r = slot[static_cast<std::size_t>(it.row())];
      const int cc = slot[static_cast<std::size_t>(it.col())];
      if (r >= 0 && cc >= 0) trip.emplace_back(r, cc, it.value());
    }
  }
  const auto n = static_cast<Eigen::Index>(free.size());
  SparseMatrix Kff(n, n);
  Kff.setFromTriplets(trip.begin(), trip.end());
  return Kff;
}

struct ReducedSolver::Impl {
  SparseMatrix Kff;
  Eigen::SimplicialLLT<SparseMatrix> llt;
};

ReducedSolver::ReducedSolver(const SparseMatrix& K, const DofPartition& part)
    : impl_(std::make_unique<Impl>()) {
  if (part.free().empty()) {
    impl_->Kff.resize(0, 0);
    return;
  }
  if (part.fixed().empty()) {
    throw SingularSystemError("no Dirichlet data: the stiffness matrix is singular");
  }
  impl_->Kff = fol::free_block(K, part);
  impl_->llt.compute(impl_->Kff);
  ++g_factorizations;
  if (impl_->llt.info() != Eigen::Success) {
    throw SingularSystemError("reduced stiffness is not positive definite (under-constrained?)");
  }
}

ReducedSolver::~ReducedSolver() = default;
ReducedSolver::ReducedSolver(ReducedSolver&&) noexcept = default;
ReducedSolver& ReducedSolver::operator=(ReducedSolver&&) noexcept = default;

Eigen::MatrixXd ReducedSolver::solve(const Eigen::MatrixXd& rhs) const {
  if (impl_->Kff.rows() == 0) return Eigen::MatrixXd(0, rhs.cols());
  Eigen::MatrixXd x = impl_->llt.solve(rhs);
  if (impl_->llt.info() != Eigen::Success) throw SingularSystemError("back-substitution failed");
  return x;
}

const SparseMatrix& ReducedSolver::free_block() const { return impl_->Kff; }

Eigen::VectorXd solve_constrained(const SparseMatrix& K, const Eigen::VectorXd& f,
                                  const DofPartition& part) {
  ReducedSolver solver(K, part);
  Eigen::VectorXd u = part.scatter(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(part.free().size())));
  // Lift the prescribed values: rhs = f - K u_c, restricted to free rows.
  const Eigen::VectorXd lifted = f - K * u;
  const Eigen::VectorXd x = solver.solve(part.gather_free(lifted));
  for (std::size_t i = 0; i < part.free().size(); ++i) u[part.free()[i]] = x[static_cast<Eigen::Index>(i)];
  return u;
}

namespace {

double free_norm(const Eigen::VectorXd& r, const DofPartition& part) {
  double s = 0.0;
  for (int i : part.free()) s += r[i] * r[i];
  return std::sqrt(s);
}

}  // namespace

NewtonResult newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                          const std::function<SparseMatrix(const Eigen::VectorXd&)>& tangent,
                          const DofPartition& part, Eigen::VectorXd u0, double tol, int max_iter) {
  NewtonResult out;
  out.T = std::move(u0);
  for (std::size_t i = 0; i < part.fixed().size(); ++i) {
    out.T[part.fixed()[i]] = part.fixed_values()[static_cast<Eigen::Index>(i)];
  }
  Eigen::VectorXd r = residual(out.T);
  double rn = free_norm(r, part);
  out.residual_history.push_back(rn);
  for (int it = 0; it < max_iter && !(rn <= tol); ++it) {
    const SparseMatrix Kff = free_block(tangent(out.T), part);
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(Kff);
    ++g_factorizations;
    if (lu.info() != Eigen::Success) throw SingularSystemError("Newton tangent is singular");
    const Eigen::VectorXd dx = lu.solve(-part.gather_free(r));

    double step = 1.0;
    Eigen::VectorXd trial;
    Eigen::VectorXd r_trial;
    double rn_trial = 0.0;
    for (int halvings = 0; halvings <= 20; ++halvings) {
      trial = out.T;
      for (std::size_t i = 0; i < part.free().size(); ++i) {
        trial[part.free()[i]] += step * dx[static_cast<Eigen::Index>(i)];
      }
      r_trial = residual(trial);
      rn_trial = free_norm(r_trial, part);
      if (std::isfinite(rn_trial) && rn_trial <= rn) break;
      step *= 0.5;
    }
    out.T = std::move(trial);
    r = std::move(r_trial);
    rn = rn_trial;
    out.residual_history.push_back(rn);
    if (!std::isfinite(rn)) break;
  }
  if (!(rn <= tol)) {
    std::ostringstream os;
    os << "Newton did not converge in " << max_iter << " iterations (|r| = " << rn
       << ", tol = " << tol << ")";
    throw ConvergenceError(os.str(), out.residual_history);
  }
  return out;
}

}  // namespace fol
