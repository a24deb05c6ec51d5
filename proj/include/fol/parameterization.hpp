#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fol/mesh.hpp"

namespace fol {

/// Sigmoidal projection of a raw field into (vmin, vmax).
struct ProjectionSpec {
  double vmin = 0.01;
  double vmax = 1.0;
  double beta = 5.0;

  void validate() const;
};

/// (vmax - vmin) * sigmoid(beta (raw - 0.5)) + vmin.
double project(const ProjectionSpec& spec, double raw);
double project_derivative(const ProjectionSpec& spec, double raw);

/// Field k_f(x,y) = c_0 + sum_ij c_ij cos(fx_i x) cos(fy_j y), fx outer and
/// fy inner in the coefficient order. With `full_basis` each (i,j) pair owns
/// four coefficients in the order sin.cos, cos.sin, sin.sin, cos.cos.
struct FourierDesign {
  std::vector<double> fx{3.0, 5.0, 7.0};
  std::vector<double> fy{2.0, 4.0, 7.0};
  bool includes_constant = true;
  bool full_basis = false;
  Eigen::VectorXd c;
  ProjectionSpec projection;

  int num_coefficients() const;
  void validate() const;
};

/// Basis functions evaluated at one point, length num_coefficients().
Eigen::VectorXd fourier_basis(const FourierDesign& design, double x, double y);
/// Raw (unprojected) field value.
double fourier_field(const FourierDesign& design, double x, double y);

/// Nodal design values and their tangent with respect to the controls.
struct NodalField {
  Eigen::VectorXd values;   // N
  Eigen::MatrixXd tangent;  // N x M, d values / d c
};

NodalField design_to_nodal(const FourierDesign& design, const Mesh& mesh);

/// Free nodal design: the controls are the nodal values themselves.
struct NodalDesign {
  Eigen::VectorXd k;
};

NodalField design_to_nodal(const NodalDesign& design);

/// Same construction as design_to_nodal, projected into the source bounds
/// (e.g. Q_min = -10, Q_max = -1 for heat sinks).
NodalField source_field(const FourierDesign& design, const Mesh& mesh, const ProjectionSpec& q_spec);

struct Ellipse {
  double cx, cy;
  double outer_radius, inner_radius;
  double angle;
};

/// Ranges for the inclusion sampler. Inclusions receive k_low.
struct EllipseSamplerConfig {
  int fine_n = 41;    // fine grid nodes per axis, (coarse_n - 1) * 2^a + 1
  int coarse_n = 11;  // network grid nodes per axis
  int min_ellipses = 1;
  int max_ellipses = 5;
  double min_outer = 0.05, max_outer = 0.25;
  double min_inner = 0.03, max_inner = 0.15;
  double k_low = 0.01;
  double k_high = 1.0;
};

struct EllipseSample {
  NodalDesign design;  // on the coarse grid
  std::vector<Ellipse> ellipses;
  double volume_fraction = 0.0;  // share of coarse nodes in the low phase
  double dispersion = 0.0;       // mean nearest-neighbour distance of centers, 0 if < 2
};

/// Rasterizes ellipses onto the fine grid (row-major, x fastest).
Eigen::VectorXd rasterize_ellipses(const std::vector<Ellipse>& ellipses, int fine_n,
                                   double k_low, double k_high);

/// Sample s draws from the stream (seed, s); output does not depend on threads.
std::vector<EllipseSample> gen_ellipse_samples(int n_samples, const EllipseSamplerConfig& cfg,
                                               std::uint64_t seed);

/// Max-pools a fine square nodal field onto a coarse square grid. Coarse node
/// I takes the maximum over fine indices [s I - s/2, s I + s/2) clipped to the
/// grid, with s = (fine_n - 1) / (coarse_n - 1).
Eigen::VectorXd maxpool_downsample(const Eigen::VectorXd& fine, int fine_n, int coarse_n);

/// Independent uniform draws, one range per coefficient.
std::vector<Eigen::VectorXd> gen_random_fourier_samples(
    int n, const std::vector<std::pair<double, double>>& ranges, std::uint64_t seed);

/// Held-out designs whose coefficients lie in (5, 10), away from the
/// default training ranges.
std::vector<Eigen::VectorXd> gen_unseen_fourier_samples(int n, int num_coefficients,
                                                        std::uint64_t seed);

/// Boundary displacement vectors, one range per component.
std::vector<Eigen::VectorXd> gen_random_bc_samples(
    int n, const std::vector<std::pair<double, double>>& component_ranges, std::uint64_t seed);

}  // namespace fol
