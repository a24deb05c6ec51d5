#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fol/mesh.hpp"

namespace fol {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct DirichletValue {
  int dof = 0;
  double value = 0.0;
};

/// Split of the DOFs into free and prescribed sets, both sorted ascending.
class DofPartition {
 public:
  DofPartition() = default;
  DofPartition(int num_dofs, const std::vector<DirichletValue>& dirichlet);

  int num_dofs() const noexcept { return num_dofs_; }
  const std::vector<int>& free() const noexcept { return free_; }
  const std::vector<int>& fixed() const noexcept { return fixed_; }
  /// Prescribed values in the order of fixed().
  const Eigen::VectorXd& fixed_values() const noexcept { return fixed_values_; }
  bool is_fixed(int dof) const { return slot_[static_cast<std::size_t>(dof)] < 0; }
  /// 1 on free DOFs, 0 on prescribed ones.
  Eigen::VectorXd free_mask() const;

  Eigen::VectorXd gather_free(const Eigen::VectorXd& full) const;
  /// Full vector with free entries from `free_values` and prescribed values elsewhere.
  Eigen::VectorXd scatter(const Eigen::VectorXd& free_values) const;

 private:
  int num_dofs_ = 0;
  std::vector<int> free_;
  std::vector<int> fixed_;
  std::vector<int> slot_;  // >=0: index into free_, <0: -(index into fixed_) - 1
  Eigen::VectorXd fixed_values_;
};

/// Global stiffness that is linear in a nodal coefficient field c:
///   K(c) = sum_e sum_a c[node(e,a)] * K_{e,a}.
/// Conductivity (thermal) and Young's modulus (plane stress) both have this
/// form when the coefficient is interpolated with the bilinear basis. The
/// derivative operator D(t) = d(K(c) t)/dc does not depend on c.
class StiffnessOperator {
 public:
  virtual ~StiffnessOperator() = default;

  virtual int num_dofs() const noexcept = 0;
  virtual int num_nodes() const noexcept = 0;

  /// out = K(coef) * V for a block of column vectors.
  virtual void apply(const Eigen::VectorXd& coef, const Eigen::MatrixXd& V,
                     Eigen::MatrixXd& out) const = 0;
  /// out(:, j) = K(A(:, j)) * t, i.e. D(t) * A.
  virtual void apply_coefficient_tangent(const Eigen::VectorXd& t, const Eigen::MatrixXd& A,
                                         Eigen::MatrixXd& out) const = 0;
  /// out = sum_j K(A(:, j)) * R(:, j).
  virtual void contract_coefficient_tangent(const Eigen::MatrixXd& A, const Eigen::MatrixXd& R,
                                            Eigen::VectorXd& out) const = 0;
  /// D(t)^T w, one entry per node.
  virtual Eigen::VectorXd coefficient_vjp(const Eigen::VectorXd& t,
                                          const Eigen::VectorXd& w) const = 0;

  virtual SparseMatrix assemble(const Eigen::VectorXd& coef) const = 0;
  /// Sparse D(t): num_dofs x num_nodes.
  virtual SparseMatrix assemble_coefficient_tangent(const Eigen::VectorXd& t) const = 0;

  Eigen::VectorXd apply(const Eigen::VectorXd& coef, const Eigen::VectorXd& v) const;
};

/// Per-element coefficient basis matrices K_{e,a}, Dofs x Dofs each.
template <int Dofs>
class ElementTables final : public StiffnessOperator {
 public:
  using ElemMatrix = Eigen::Matrix<double, Dofs, Dofs>;
  using ElemVector = Eigen::Matrix<double, Dofs, 1>;

  ElementTables(int num_nodes, std::vector<std::array<int, 4>> coef_nodes,
                std::vector<std::array<int, Dofs>> dofs,
                std::vector<std::array<ElemMatrix, 4>> basis);

  int num_dofs() const noexcept override { return num_dofs_; }
  int num_nodes() const noexcept override { return num_nodes_; }
  int num_elements() const noexcept { return static_cast<int>(dofs_.size()); }
  const std::array<int, Dofs>& element_dofs(int e) const { return dofs_[static_cast<std::size_t>(e)]; }
  const std::array<int, 4>& element_nodes(int e) const { return coef_nodes_[static_cast<std::size_t>(e)]; }
  const std::array<ElemMatrix, 4>& basis(int e) const { return basis_[static_cast<std::size_t>(e)]; }
  ElemMatrix element_matrix(int e, const Eigen::VectorXd& coef) const;

  void apply(const Eigen::VectorXd& coef, const Eigen::MatrixXd& V,
             Eigen::MatrixXd& out) const override;
  void apply_coefficient_tangent(const Eigen::VectorXd& t, const Eigen::MatrixXd& A,
                                 Eigen::MatrixXd& out) const override;
  void contract_coefficient_tangent(const Eigen::MatrixXd& A, const Eigen::MatrixXd& R,
                                    Eigen::VectorXd& out) const override;
  Eigen::VectorXd coefficient_vjp(const Eigen::VectorXd& t,
                                  const Eigen::VectorXd& w) const override;
  SparseMatrix assemble(const Eigen::VectorXd& coef) const override;
  SparseMatrix assemble_coefficient_tangent(const Eigen::VectorXd& t) const override;

  using StiffnessOperator::apply;

 private:
  int num_nodes_;
  int num_dofs_;
  std::vector<std::array<int, 4>> coef_nodes_;
  std::vector<std::array<int, Dofs>> dofs_;
  std::vector<std::array<ElemMatrix, 4>> basis_;
};

extern template class ElementTables<4>;
extern template class ElementTables<8>;

/// Number of sparse factorizations performed by this process. Code paths that
/// promise to be solver-free are checked against it.
std::uint64_t factorization_count() noexcept;

/// Solves K_ff u_f = f_f - K_fc u_c with a sparse Cholesky factorization and
/// returns the full vector. Throws SingularSystemError if K_ff is not SPD.
Eigen::VectorXd solve_constrained(const SparseMatrix& K, const Eigen::VectorXd& f,
                                  const DofPartition& part);

/// Reusable factorization of the free-free block.
class ReducedSolver {
 public:
  ReducedSolver(const SparseMatrix& K, const DofPartition& part);
  ~ReducedSolver();
  ReducedSolver(ReducedSolver&&) noexcept;
  ReducedSolver& operator=(ReducedSolver&&) noexcept;

  /// Solves K_ff x = rhs for free-sized right-hand sides (columns).
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  const SparseMatrix& free_block() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SparseMatrix free_block(const SparseMatrix& K, const DofPartition& part);

struct NewtonResult {
  Eigen::VectorXd T;
  std::vector<double> residual_history;  // free-DOF residual norms, one per iterate
};

/// Newton iteration on r(u) = 0 over the free DOFs of `part`, starting from
/// u0 (whose prescribed entries are kept). The tangent may be nonsymmetric
/// and is factorized with sparse LU. Full steps, halved while |r| grows.
/// Throws ConvergenceError (with the residual history) after max_iter steps.
NewtonResult newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                          const std::function<SparseMatrix(const Eigen::VectorXd&)>& tangent,
                          const DofPartition& part, Eigen::VectorXd u0, double tol, int max_iter);

}  // namespace fol
