#include "fol/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fol/error.hpp"

namespace fol {

Mesh::Mesh(std::vector<Point2> coords, std::vector<std::array<int, 4>> elems)
    : coords_(std::move(coords)), elems_(std::move(elems)) {
  const int n = num_nodes();
  for (std::size_t e = 0; e < elems_.size(); ++e) {
    const auto& c = elems_[e];
    for (int a = 0; a < 4; ++a) {
      if (c[a] < 0 || c[a] >= n) {
        std::ostringstream os;
        os << "element " << e << " references node " << c[a] << " outside [0," << n << ")";
        throw ConfigError(os.str());
      }
      for (int b = a + 1; b < 4; ++b) {
        if (c[a] == c[b]) {
          std::ostringstream os;
          os << "element " << e << " repeats node " << c[a];
          throw ConfigError(os.str());
        }
      }
    }
  }
}

Mesh build_grid(int nx, int ny, double lx, double ly) {
  if (nx < 2 || ny < 2) {
    throw ConfigError("build_grid: need at least 2 nodes per axis, got " + std::to_string(nx) +
                      "x" + std::to_string(ny));
  }
  if (!(lx > 0.0) || !(ly > 0.0)) {
    throw ConfigError("build_grid: domain lengths must be positive");
  }
  Mesh m;
  m.nx_ = nx;
  m.ny_ = ny;
  m.lx_ = lx;
  m.ly_ = ly;
  m.coords_.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      m.coords_.push_back({i * lx / (nx - 1), j * ly / (ny - 1)});
    }
  }
  m.elems_.reserve(static_cast<std::size_t>(nx - 1) * (ny - 1));
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      m.elems_.push_back({m.node_id(i, j), m.node_id(i + 1, j), m.node_id(i + 1, j + 1),
                          m.node_id(i, j + 1)});
    }
  }
  return m;
}

std::vector<int> Mesh::edge_nodes(Edge edge) const {
  if (!structured()) throw ConfigError("edge_nodes requires a structured grid");
  std::vector<int> ids;
  switch (edge) {
    case Edge::Left:
      for (int j = 0; j < ny_; ++j) ids.push_back(node_id(0, j));
      break;
    case Edge::Right:
      for (int j = 0; j < ny_; ++j) ids.push_back(node_id(nx_ - 1, j));
      break;
    case Edge::Bottom:
      for (int i = 0; i < nx_; ++i) ids.push_back(node_id(i, 0));
      break;
    case Edge::Top:
      for (int i = 0; i < nx_; ++i) ids.push_back(node_id(i, ny_ - 1));
      break;
  }
  return ids;
}

std::vector<std::array<int, 2>> Mesh::edge_segments(Edge edge) const {
  auto ids = edge_nodes(edge);
  // Orient counterclockwise around the domain.
  if (edge == Edge::Left || edge == Edge::Top) std::reverse(ids.begin(), ids.end());
  std::vector<std::array<int, 2>> segs;
  for (std::size_t s = 0; s + 1 < ids.size(); ++s) segs.push_back({ids[s], ids[s + 1]});
  return segs;
}

Eigen::VectorXd Mesh::x() const {
  Eigen::VectorXd v(num_nodes());
  for (int i = 0; i < num_nodes(); ++i) v[i] = coords_[static_cast<std::size_t>(i)].x;
  return v;
}

Eigen::VectorXd Mesh::y() const {
  Eigen::VectorXd v(num_nodes());
  for (int i = 0; i < num_nodes(); ++i) v[i] = coords_[static_cast<std::size_t>(i)].y;
  return v;
}

QuadratureRule gauss_rule(int order) {
  std::vector<double> pts;
  std::vector<double> wts;
  switch (order) {
    case 1:
      pts = {0.0};
      wts = {2.0};
      break;
    case 2: {
      const double g = 1.0 / std::sqrt(3.0);
      pts = {-g, g};
      wts = {1.0, 1.0};
      break;
    }
    case 3: {
      const double g = std::sqrt(3.0 / 5.0);
      pts = {-g, 0.0, g};
      wts = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      break;
    }
    default:
      throw ConfigError("gauss_rule: unsupported order " + std::to_string(order) +
                        " (expected 1, 2 or 3)");
  }
  QuadratureRule rule;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      rule.push_back({pts[i], pts[j], wts[i] * wts[j]});
    }
  }
  return rule;
}

Eigen::Vector4d bilinear_shape(double xi, double eta) {
  return 0.25 * Eigen::Vector4d((1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta),
                                (1 - xi) * (1 + eta));
}

Eigen::Matrix<double, 4, 2> bilinear_shape_derivatives(double xi, double eta) {
  Eigen::Matrix<double, 4, 2> d;
  d << -(1 - eta), -(1 - xi),
        (1 - eta), -(1 + xi),
        (1 + eta),  (1 + xi),
       -(1 + eta),  (1 - xi);
  return 0.25 * d;
}

ShapeEval shape_eval(const Mesh& mesh, int elem, double xi, double eta) {
  const auto& conn = mesh.element(elem);
  Eigen::Matrix<double, 2, 4> X;
  for (int a = 0; a < 4; ++a) {
    const auto& p = mesh.node(conn[a]);
    X(0, a) = p.x;
    X(1, a) = p.y;
  }
  ShapeEval s;
  s.N = bilinear_shape(xi, eta);
  s.dN_dxi = bilinear_shape_derivatives(xi, eta);
  const Eigen::Matrix2d J = X * s.dN_dxi;  // J(r, c) = dX_r / dxi_c
  s.detJ = J.determinant();
  if (!(s.detJ > 0.0)) throw DegenerateElementError(elem, s.detJ);
  s.B = J.transpose().inverse() * s.dN_dxi.transpose();
  return s;
}

namespace {

// Locate the element of a structured grid containing (x, y) and the parent
// coordinates inside it. Points outside the domain are clamped.
std::pair<int, Eigen::Vector2d> locate(const Mesh& mesh, double x, double y) {
  const double hx = mesh.lx() / (mesh.nx() - 1);
  const double hy = mesh.ly() / (mesh.ny() - 1);
  const double fx = std::clamp(x / hx, 0.0, static_cast<double>(mesh.nx() - 1));
  const double fy = std::clamp(y / hy, 0.0, static_cast<double>(mesh.ny() - 1));
  const int i = std::min(static_cast<int>(std::floor(fx)), mesh.nx() - 2);
  const int j = std::min(static_cast<int>(std::floor(fy)), mesh.ny() - 2);
  const double xi = 2.0 * (fx - i) - 1.0;
  const double eta = 2.0 * (fy - j) - 1.0;
  return {j * (mesh.nx() - 1) + i, Eigen::Vector2d(xi, eta)};
}

}  // namespace

double interpolate(const Mesh& mesh, const Eigen::VectorXd& nodal, double x, double y) {
  if (!mesh.structured()) throw ConfigError("interpolate requires a structured grid");
  if (nodal.size() != mesh.num_nodes()) throw ConfigError("interpolate: field size mismatch");
  const auto [e, p] = locate(mesh, x, y);
  const Eigen::Vector4d N = bilinear_shape(p[0], p[1]);
  const auto& c = mesh.element(e);
  double v = 0.0;
  for (int a = 0; a < 4; ++a) v += N[a] * nodal[c[a]];
  return v;
}

Eigen::VectorXd upsample(const Mesh& coarse, const Eigen::VectorXd& nodal, const Mesh& fine) {
  Eigen::VectorXd out(fine.num_nodes());
  for (int n = 0; n < fine.num_nodes(); ++n) {
    const auto& p = fine.node(n);
    out[n] = interpolate(coarse, nodal, p.x, p.y);
  }
  return out;
}

}  // namespace fol
