#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/elasticity.hpp"
#include "fol/fem.hpp"
#include "fol/mlp.hpp"
#include "fol/parameterization.hpp"
#include "fol/thermal.hpp"

namespace fol {

enum class PhysicsLoss { Energy, Residual };

PhysicsLoss parse_physics_loss(const std::string& name);
std::string to_string(PhysicsLoss p);

struct LossWeights {
  double w_ph = 1.0;
  double w_bc = 0.0;
  double w_se = 0.0;
  double w_db = 10.0;
  PhysicsLoss physics = PhysicsLoss::Energy;
  /// Network predicts only free DOFs; L_bc vanishes and w_bc is ignored.
  bool hard_bc = true;

  void validate() const;
};

/// One training instance: the discrete physics for a design c, in the form
///   r(T; c) = K(coef(c)) T - load(c),   T = prescribed on dofs.fixed().
/// Tangent matrices may have zero columns, meaning "independent of c".
struct FolSample {
  Eigen::VectorXd input;                        // c, fed to the network
  std::shared_ptr<const StiffnessOperator> op;  // K as a function of the nodal coefficient
  Eigen::VectorXd coef;                         // nodal k (or E); scale field in nonlinear mode
  Eigen::MatrixXd coef_tangent;                 // A = d coef / d c
  Eigen::VectorXd load;                         // f
  Eigen::MatrixXd load_tangent;                 // d f / d c
  DofPartition dofs;
  Eigen::MatrixXd fixed_tangent;                // d(prescribed values) / d c, rows in dofs.fixed() order
  std::optional<NonlinearConductivity> nonlinear;

  int num_dofs() const { return dofs.num_dofs(); }
  int design_size() const { return static_cast<int>(input.size()); }
  void validate() const;
};

/// Thermal instance with the given input vector; tangents default to zero.
FolSample thermal_sample(const ThermalBVP& bvp, Eigen::VectorXd input,
                         Eigen::MatrixXd coef_tangent = {}, Eigen::MatrixXd load_tangent = {});

/// Fourier-parameterized conductivity, left/right Dirichlet edges, no source.
FolSample fourier_conductivity_sample(const std::shared_ptr<const ThermalSpace>& space,
                                      const FourierDesign& design, double t_left = 1.0,
                                      double t_right = 0.1);

/// Fourier-parameterized heat source on a fixed conductivity field with
/// all four edges held at t_boundary.
FolSample fourier_source_sample(const std::shared_ptr<const ThermalSpace>& space,
                                const FourierDesign& source_design, const ProjectionSpec& q_spec,
                                const Eigen::VectorXd& k_nodal, double t_boundary = 0.0);

/// Plane-stress instance whose input is the top-edge displacement (ux, uy).
FolSample elastic_bc_sample(const std::shared_ptr<const ElasticSpace>& space,
                            const Eigen::VectorXd& E_nodal, double ux, double uy);

/// FEM solution of the sample (sparse Cholesky, or Newton in nonlinear mode).
Eigen::VectorXd reference_solution(const FolSample& s);

// Individual terms on a full DOF vector T.

/// 1/2 T^T K T - T^T f (linear mode).
double loss_energy(const FolSample& s, const Eigen::VectorXd& T);
/// Sum of squared residuals over free DOFs.
double loss_residual(const FolSample& s, const Eigen::VectorXd& T);
/// w_db * sum over prescribed DOFs of (T_i - Tbar_i)^2.
double loss_dirichlet(const FolSample& s, const Eigen::VectorXd& T, double w_db);
/// sum_i sum_j (dr_i/dc_j)^2 over free DOFs i, with dT_dc the full N x M
/// state tangent (prescribed rows included).
double loss_sensitivity(const FolSample& s, const Eigen::VectorXd& T, const Eigen::MatrixXd& dT_dc);

/// dr/dc = K dT/dc + D(T) A - df/dc, free rows only (prescribed rows zero).
Eigen::MatrixXd residual_design_derivative(const FolSample& s, const Eigen::VectorXd& T,
                                           const Eigen::MatrixXd& dT_dc);

/// Nodal conductivity in effect: coef, or k(T) in nonlinear mode.
Eigen::VectorXd sample_conductivity(const FolSample& s, const Eigen::VectorXd& T);

/// r(T) = K(coef or k(T)) T - f on all DOFs.
Eigen::VectorXd sample_residual(const FolSample& s, const Eigen::VectorXd& T);

struct LossTerms {
  double total = 0.0;
  double physics = 0.0;
  double boundary = 0.0;
  double sensitivity = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms& operator*=(double a);
};

/// Network output size for a sample: free DOFs with hard BCs, all DOFs otherwise.
int network_output_size(const FolSample& s, const LossWeights& w);

/// Full DOF vector from a network output.
Eigen::VectorXd network_to_state(const FolSample& s, const LossWeights& w, const Eigen::VectorXd& out);
/// Full N x M state tangent from the network Jacobian.
Eigen::MatrixXd network_to_state_tangent(const FolSample& s, const LossWeights& w,
                                         const Eigen::MatrixXd& jac);

/// Weighted loss of one sample and, if the adjoint pointers are set, its
/// derivatives with respect to the network output and Jacobian.
/// Throws NonFiniteLossError naming the offending term.
LossTerms sample_loss(const FolSample& s, const LossWeights& w, const Eigen::VectorXd& out,
                      const Eigen::MatrixXd* jac, Eigen::VectorXd* out_adjoint,
                      Eigen::MatrixXd* jac_adjoint);

struct BatchLoss {
  LossTerms terms;       // batch means
  Eigen::VectorXd grad;  // d(mean total)/d theta, empty if not requested
};

/// Mean over the listed samples of w_ph L_ph + w_bc L_bc + w_se L_se.
BatchLoss total_loss(const Mlp& net, const std::vector<FolSample>& samples,
                     const std::vector<int>& batch, const LossWeights& w, bool with_grad,
                     int threads = 1);
BatchLoss total_loss(const Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                     bool with_grad, int threads = 1);

}  // namespace fol
