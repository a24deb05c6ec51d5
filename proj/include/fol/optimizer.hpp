#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/losses.hpp"
#include "fol/mlp.hpp"
#include "fol/parameterization.hpp"

namespace fol {

enum class ConstraintType { Equality, Inequality };

/// Equalities are always active; an inequality g <= 0 is active once g >= -tol.
std::vector<int> detect_active(const std::vector<ConstraintType>& types, const Eigen::VectorXd& values,
                               double tol);

/// I - P (P^T P)^+ P^T for the active-gradient columns P.
Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& P, bool* rank_deficient = nullptr);

struct ProjectionStep {
  Eigen::VectorXd c;
  Eigen::VectorXd step;
  bool rank_deficient = false;
};

/// c - alpha (I - P (P^T P)^-1 P^T) dJ/dc - P (P^T P)^-1 g_a. A rank-deficient
/// P falls back to the pseudo-inverse and sets the flag.
ProjectionStep projection_step(const Eigen::VectorXd& c, double alpha, const Eigen::VectorXd& dJ_dc,
                               const Eigen::MatrixXd& P, const Eigen::VectorXd& g_active);

/// Objective and constraint values with their design gradients at one c.
struct DesignEvaluation {
  double J = 0.0;
  Eigen::VectorXd dJ;  // n
  Eigen::VectorXd g;   // m constraint values
  Eigen::MatrixXd dg;  // n x m, one gradient column per constraint
  double time_ms = 0.0;
};

struct OptimProblem {
  std::function<DesignEvaluation(const Eigen::VectorXd& c)> evaluate;
  std::vector<ConstraintType> constraints;
};

struct OptimOptions {
  int max_iter = 200;
  double alpha = 1e-2;
  double active_tol = 1e-6;
  double step_tol = 1e-6;  // stop when |dc| < step_tol (1 + |c|)
  bool maximize = false;
  /// Called with each evaluated design before the step is taken.
  std::function<void(int iter, const Eigen::VectorXd& c)> on_iterate;
};

struct IterRecord {
  int iter = 0;
  double J = 0.0;          // objective as posed (not negated)
  Eigen::VectorXd g;
  double step_norm = 0.0;
  double phase_time_ms = 0.0;
};

struct OptimState {
  Eigen::VectorXd c;
  double alpha = 0.0;
  std::vector<int> active;
  std::vector<IterRecord> history;
  bool converged = false;
  bool rank_warning = false;
};

/// Rosen gradient projection. Maximization minimizes -J. Throws
/// NumericalError with the current design when a response is not finite.
OptimState optimize(const OptimProblem& problem, Eigen::VectorXd c0, const OptimOptions& opts);

enum class NandMode { Fem, Fol };

NandMode parse_nand_mode(const std::string& s);
std::string to_string(NandMode m);

/// Maximize int (k dT/dy)^2 subject to int (k dT/dx)^2 - offset = 0 over
/// Fourier coefficients, starting from a uniform field.
struct NandProblem {
  int n = 51;
  std::vector<double> fx{5.0, 7.0, 9.0};
  std::vector<double> fy{4.0, 6.0, 8.0};
  ProjectionSpec projection;
  double t_left = 1.0;
  double t_right = 0.1;
  double offset = 0.125;
  double c0 = 0.5;
};

inline LossWeights default_nand_weights() {
  LossWeights w;
  w.w_se = 1.0;
  return w;
}

struct NandOptions {
  NandMode mode = NandMode::Fem;
  int max_iter = 100;
  double alpha = 1e-2;
  double active_tol = 1e-6;
  /// FOL mode: epochs at the first design and per later iteration (warm start).
  int fol_initial_epochs = 5000;
  int fol_epochs = 200;
  std::vector<int> hidden;  // empty: one hidden layer of width n
  Activation activation = Activation::Swish;
  double lr = 1e-3;
  LossWeights weights = default_nand_weights();
  std::uint64_t seed = 1;
  std::function<void(int iter, const Eigen::VectorXd& c)> on_iterate;
};

struct NandResult {
  OptimState state;
  NandMode mode = NandMode::Fem;
  double J_start = 0.0;  // FEM values
  double h_start = 0.0;
  double J_final = 0.0;
  double h_final = 0.0;
};

NandResult optimize_nand(const NandProblem& problem, const NandOptions& opts);

/// iter,J,h,step_norm,phase_time_ms,mode
void write_optim_history_csv(const NandResult& r, std::ostream& os);

}  // namespace fol
