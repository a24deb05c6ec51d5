#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/losses.hpp"
#include "fol/mlp.hpp"
#include "fol/thermal.hpp"

namespace fol {

enum class ResponseKind {
  FluxYSq,             // J = int (-k dT/dy)^2 dV
  FluxXSqMinusOffset,  // h = int (-k dT/dx)^2 dV - offset
};

struct ResponseFunction {
  ResponseKind kind = ResponseKind::FluxYSq;
  double offset = 0.125;

  static ResponseFunction flux_y() { return {ResponseKind::FluxYSq, 0.0}; }
  static ResponseFunction flux_x_constraint(double offset = 0.125) {
    return {ResponseKind::FluxXSqMinusOffset, offset};
  }
};

ResponseFunction parse_response(const std::string& name);
std::string to_string(const ResponseFunction& rf);

/// Quadrature of the response on the space's rule; k and T nodal.
double eval_response(const ResponseFunction& rf, const ThermalSpace& space, const Eigen::VectorXd& k,
                     const Eigen::VectorXd& T);
double eval_response(const ResponseFunction& rf, const ThermalBVP& bvp, const Eigen::VectorXd& T);

struct ResponsePartials {
  Eigen::VectorXd dT;  // dJ/dT
  Eigen::VectorXd dk;  // dJ/dk
};

ResponsePartials partials(const ResponseFunction& rf, const ThermalSpace& space, const Eigen::VectorXd& k,
                          const Eigen::VectorXd& T);
ResponsePartials partials(const ResponseFunction& rf, const ThermalBVP& bvp, const Eigen::VectorXd& T);

/// dJ/dc with one adjoint solve per response:
///   lambda = -K_ff^{-T} (dJ/dT)_f,   dJ/dc = (lambda^T dr/dk + dJ/dk) A.
/// Linear problems only; T should be the FEM solution.
Eigen::VectorXd adjoint_sensitivity(const ResponseFunction& rf, const ThermalBVP& bvp,
                                    const Eigen::VectorXd& T, const Eigen::MatrixXd& A);
/// Several responses sharing one factorization.
std::vector<Eigen::VectorXd> adjoint_sensitivities(const std::vector<ResponseFunction>& rfs,
                                                   const ThermalBVP& bvp, const Eigen::VectorXd& T,
                                                   const Eigen::MatrixXd& A);

/// Same quantity through dT/dc = -K_ff^{-1} (dr/dk A)_f, i.e. M solves.
Eigen::VectorXd direct_sensitivity(const ResponseFunction& rf, const ThermalBVP& bvp,
                                   const Eigen::VectorXd& T, const Eigen::MatrixXd& A);

/// dJ/dc = dJ/dT dT~/dc + dJ/dk A with the network prediction T~ and its
/// input Jacobian. Solves nothing.
Eigen::VectorXd fol_sensitivity(const ResponseFunction& rf, const Mlp& net, const FolSample& sample,
                                const LossWeights& w, const ThermalSpace& space);

/// ||a - b|| / ||a||.
double relative_difference(const Eigen::VectorXd& reference, const Eigen::VectorXd& other);

/// Entry-wise |a_i - b_i| / max(|a_i|, 1e-12 max|a|).
Eigen::VectorXd entrywise_relative_error(const Eigen::VectorXd& reference, const Eigen::VectorXd& other);

/// Named columns written side by side, first column c_index.
struct SensitivityTable {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;
};

void write_sensitivity_csv(const SensitivityTable& t, std::ostream& os);

/// Nodal map of dJ/dk: node_id,x,y,dJ_dk.
void write_nodal_sensitivity_csv(const Mesh& mesh, const Eigen::VectorXd& dJ_dk, std::ostream& os);

}  // namespace fol
