#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fol {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

enum class Edge { Left, Right, Bottom, Top };

/// 2D quadrilateral mesh. Grids built by build_grid() number nodes row-major
/// with x fastest; element connectivity is counterclockwise.
class Mesh {
 public:
  Mesh() = default;
  /// General quad mesh; validates connectivity. nx/ny are left at 0.
  Mesh(std::vector<Point2> coords, std::vector<std::array<int, 4>> elems);

  int num_nodes() const noexcept { return static_cast<int>(coords_.size()); }
  int num_elements() const noexcept { return static_cast<int>(elems_.size()); }
  const std::vector<Point2>& coords() const noexcept { return coords_; }
  const std::vector<std::array<int, 4>>& elems() const noexcept { return elems_; }
  const Point2& node(int id) const { return coords_.at(static_cast<std::size_t>(id)); }
  const std::array<int, 4>& element(int id) const { return elems_.at(static_cast<std::size_t>(id)); }

  bool structured() const noexcept { return nx_ > 0; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double lx() const noexcept { return lx_; }
  double ly() const noexcept { return ly_; }
  int node_id(int i, int j) const noexcept { return j * nx_ + i; }

  /// Node ids on one edge of a structured grid, in increasing id order.
  std::vector<int> edge_nodes(Edge edge) const;
  /// Boundary segments (node pairs, domain interior on the left) of one edge.
  std::vector<std::array<int, 2>> edge_segments(Edge edge) const;

  Eigen::VectorXd x() const;
  Eigen::VectorXd y() const;

 private:
  friend Mesh build_grid(int nx, int ny, double lx, double ly);

  std::vector<Point2> coords_;
  std::vector<std::array<int, 4>> elems_;
  int nx_ = 0;
  int ny_ = 0;
  double lx_ = 0.0;
  double ly_ = 0.0;
};

/// Uniform nx-by-ny node grid on [0,lx]x[0,ly]. Throws ConfigError for
/// nx or ny < 2 or non-positive lengths.
Mesh build_grid(int nx, int ny, double lx = 1.0, double ly = 1.0);

struct QuadraturePoint {
  double xi;
  double eta;
  double weight;
};

using QuadratureRule = std::vector<QuadraturePoint>;

/// Tensor-product Gauss-Legendre rule on [-1,1]^2, order in {1,2,3}.
QuadratureRule gauss_rule(int order);

/// Bilinear shape functions and their derivatives at one parent point.
struct ShapeEval {
  Eigen::Vector4d N;
  Eigen::Matrix<double, 4, 2> dN_dxi;
  /// Physical gradients: row 0 = d/dx, row 1 = d/dy, one column per node.
  Eigen::Matrix<double, 2, 4> B;
  double detJ = 0.0;
};

Eigen::Vector4d bilinear_shape(double xi, double eta);
Eigen::Matrix<double, 4, 2> bilinear_shape_derivatives(double xi, double eta);

/// Throws DegenerateElementError when det J <= 0.
ShapeEval shape_eval(const Mesh& mesh, int elem, double xi, double eta);

/// Value of a nodal field at physical point (x, y) of a structured grid via
/// bilinear interpolation in the containing element.
double interpolate(const Mesh& mesh, const Eigen::VectorXd& nodal, double x, double y);

/// Resample a nodal field of a structured grid onto a finer uniform grid.
Eigen::VectorXd upsample(const Mesh& coarse, const Eigen::VectorXd& nodal, const Mesh& fine);

}  // namespace fol
