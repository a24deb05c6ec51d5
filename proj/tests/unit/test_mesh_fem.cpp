#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "fol/error.hpp"
#include "fol/fem.hpp"
#include "fol/mesh.hpp"
#include "fol/thermal.hpp"

using namespace fol;

namespace {

// one distorted convex quad, counter-clockwise
Mesh skewed_quad() {
  return Mesh({{0.0, 0.0}, {2.0, 0.2}, {2.3, 1.7}, {-0.2, 1.1}}, {{{0, 1, 2, 3}}});
}

// 3x3 grid with the centre node moved off its lattice position
Mesh distorted_grid() {
  Mesh g = build_grid(3, 3);
  auto coords = g.coords();
  coords[4] = {0.58, 0.43};
  return Mesh(coords, g.elems());
}

double monomial_integral(int p) { return p % 2 ? 0.0 : 2.0 / (p + 1); }

}  // namespace

TEST_CASE("grid numbering and edges") {
  const Mesh m = build_grid(4, 3, 2.0, 1.0);
  CHECK(m.num_nodes() == 12);
  CHECK(m.num_elements() == 6);
  CHECK(m.node(m.node_id(3, 2)).x == doctest::Approx(2.0));
  CHECK(m.node(m.node_id(3, 2)).y == doctest::Approx(1.0));
  CHECK(m.edge_nodes(Edge::Left) == std::vector<int>{0, 4, 8});
  CHECK(m.edge_nodes(Edge::Top) == std::vector<int>{8, 9, 10, 11});
  CHECK(m.edge_segments(Edge::Bottom).size() == 3);
  CHECK_THROWS_AS(build_grid(1, 5), ConfigError);
  CHECK_THROWS_AS(build_grid(3, 3, -1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Mesh({{0, 0}, {1, 0}, {1, 1}}, {{{0, 1, 2, 3}}}), ConfigError);
  CHECK_THROWS_AS(Mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{{0, 1, 1, 3}}}), ConfigError);
}

TEST_CASE("shape functions: partition of unity and Kronecker property") {
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd p = testutil::random_vector(2, 100 + k);
    const Eigen::Vector4d N = bilinear_shape(p[0], p[1]);
    const auto dN = bilinear_shape_derivatives(p[0], p[1]);
    CHECK(N.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(dN.col(0).sum()) < 1e-14);
    CHECK(std::abs(dN.col(1).sum()) < 1e-14);
  }
  const double corners[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};
  for (int a = 0; a < 4; ++a) {
    const Eigen::Vector4d N = bilinear_shape(corners[a][0], corners[a][1]);
    for (int b = 0; b < 4; ++b) CHECK(N[b] == (a == b ? 1.0 : 0.0));
  }
}

TEST_CASE("shape derivatives match finite differences") {
  const Eigen::VectorXd p = testutil::random_vector(2, 5);
  const double h = 1e-6;
  const auto dN = bilinear_shape_derivatives(p[0], p[1]);
  const Eigen::Vector4d dxi = (bilinear_shape(p[0] + h, p[1]) - bilinear_shape(p[0] - h, p[1])) / (2 * h);
  const Eigen::Vector4d deta = (bilinear_shape(p[0], p[1] + h) - bilinear_shape(p[0], p[1] - h)) / (2 * h);
  CHECK((dN.col(0) - dxi).norm() < 1e-9);
  CHECK((dN.col(1) - deta).norm() < 1e-9);
}

TEST_CASE("Gauss rules integrate monomials exactly up to degree 2n-1") {
  for (int n = 1; n <= 3; ++n) {
    const QuadratureRule rule = gauss_rule(n);
    CHECK(rule.size() == static_cast<std::size_t>(n * n));
    for (int a = 0; a <= 2 * n - 1; ++a) {
      for (int b = 0; b <= 2 * n - 1; ++b) {
        double s = 0.0;
        for (const auto& q : rule) s += q.weight * std::pow(q.xi, a) * std::pow(q.eta, b);
        CHECK(s == doctest::Approx(monomial_integral(a) * monomial_integral(b)).epsilon(1e-13));
      }
    }
  }
  CHECK_THROWS_AS(gauss_rule(0), ConfigError);
  CHECK_THROWS_AS(gauss_rule(4), ConfigError);
}

TEST_CASE("isoparametric map reproduces linear fields and the area") {
  const Mesh m = skewed_quad();
  Eigen::Vector4d xs, ys;
  for (int a = 0; a < 4; ++a) {
    xs[a] = m.node(a).x;
    ys[a] = m.node(a).y;
  }
  // shoelace area
  double area = 0.0;
  for (int a = 0; a < 4; ++a) area += xs[a] * ys[(a + 1) % 4] - xs[(a + 1) % 4] * ys[a];
  area *= 0.5;
  double integrated = 0.0;
  for (const auto& q : gauss_rule(2)) {
    const ShapeEval s = shape_eval(m, 0, q.xi, q.eta);
    integrated += q.weight * s.detJ;
    const Eigen::Vector2d gx = s.B * xs;
    const Eigen::Vector2d gy = s.B * ys;
    CHECK(gx[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(gx[1]) < 1e-13);
    CHECK(std::abs(gy[0]) < 1e-13);
    CHECK(gy[1] == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(integrated == doctest::Approx(area).epsilon(1e-13));
}

TEST_CASE("clockwise element is reported as degenerate") {
  const Mesh m({{0, 0}, {0, 1}, {1, 1}, {1, 0}}, {{{0, 1, 2, 3}}});
  try {
    shape_eval(m, 0, 0.0, 0.0);
    FAIL("expected DegenerateElementError");
  } catch (const DegenerateElementError& e) {
    CHECK(e.element() == 0);
    CHECK(e.det_j() < 0.0);
  }
}

TEST_CASE("interpolate and upsample are exact for bilinear fields") {
  const Mesh coarse = build_grid(5, 4, 2.0, 1.5);
  auto f = [](double x, double y) { return 0.3 + 1.2 * x - 0.7 * y + 0.4 * x * y; };
  Eigen::VectorXd v(coarse.num_nodes());
  for (int n = 0; n < coarse.num_nodes(); ++n) v[n] = f(coarse.node(n).x, coarse.node(n).y);
  CHECK(interpolate(coarse, v, 0.77, 0.31) == doctest::Approx(f(0.77, 0.31)).epsilon(1e-13));
  CHECK(interpolate(coarse, v, 2.0, 1.5) == doctest::Approx(f(2.0, 1.5)).epsilon(1e-13));
  const Mesh fine = build_grid(17, 13, 2.0, 1.5);
  const Eigen::VectorXd u = upsample(coarse, v, fine);
  for (int n = 0; n < fine.num_nodes(); ++n) {
    CHECK(std::abs(u[n] - f(fine.node(n).x, fine.node(n).y)) < 1e-13);
  }
  CHECK_THROWS_AS(interpolate(coarse, Eigen::VectorXd::Zero(3), 0.1, 0.1), ConfigError);
}

TEST_CASE("DOF partition gathers and scatters") {
  const DofPartition p(6, {{4, 2.5}, {1, -1.0}, {4, 2.5}});
  CHECK(p.fixed() == std::vector<int>{1, 4});
  CHECK(p.free() == std::vector<int>{0, 2, 3, 5});
  CHECK(p.is_fixed(4));
  CHECK_FALSE(p.is_fixed(3));
  const Eigen::VectorXd full = p.scatter(Eigen::Vector4d(1, 2, 3, 4));
  CHECK(full[1] == -1.0);
  CHECK(full[4] == 2.5);
  CHECK(full[5] == 4.0);
  CHECK(p.gather_free(full) == Eigen::VectorXd(Eigen::Vector4d(1, 2, 3, 4)));
  CHECK(p.free_mask().sum() == 4.0);
  CHECK_THROWS_AS(DofPartition(3, {{3, 0.0}}), ConfigError);
  CHECK_THROWS_AS(DofPartition(3, {{0, 0.0}, {0, 1.0}}), ConfigError);
  CHECK_THROWS_AS(p.scatter(Eigen::VectorXd::Zero(3)), ConfigError);
}

TEST_CASE("element tables: matrix-free products agree with assembly") {
  auto space = ThermalSpace::create(distorted_grid());
  const auto& K = space->stiffness();
  const int n = K.num_nodes();
  const Eigen::VectorXd k = testutil::random_vector(n, 1, 0.2, 2.0);
  const Eigen::VectorXd t = testutil::random_vector(n, 2);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, 3);
  const Eigen::MatrixXd R = Eigen::MatrixXd::Random(n, 3);

  const Eigen::MatrixXd Kd = Eigen::MatrixXd(K.assemble(k));
  CHECK((K.apply(k, t) - Kd * t).norm() < 1e-13 * Kd.norm());

  // K is linear in the coefficient, so K(A_j) t is the directional derivative
  Eigen::MatrixXd DA;
  K.apply_coefficient_tangent(t, A, DA);
  const Eigen::MatrixXd D = Eigen::MatrixXd(K.assemble_coefficient_tangent(t));
  for (int j = 0; j < 3; ++j) {
    const Eigen::VectorXd oracle = Eigen::MatrixXd(K.assemble(A.col(j))) * t;
    CHECK((DA.col(j) - oracle).norm() < 1e-12);
    CHECK((D * A.col(j) - oracle).norm() < 1e-12);
  }

  Eigen::VectorXd c;
  K.contract_coefficient_tangent(A, R, c);
  Eigen::VectorXd c_oracle = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < 3; ++j) c_oracle += Eigen::MatrixXd(K.assemble(A.col(j))) * R.col(j);
  CHECK((c - c_oracle).norm() < 1e-12);

  const Eigen::VectorXd w = testutil::random_vector(n, 3);
  CHECK((K.coefficient_vjp(t, w) - D.transpose() * w).norm() < 1e-12);
}

TEST_CASE("constrained solve matches a dense oracle") {
  auto space = ThermalSpace::create(build_grid(5, 4));
  const int n = space->mesh().num_nodes();
  const Eigen::VectorXd k = testutil::random_vector(n, 9, 0.1, 1.0);
  const SparseMatrix K = space->stiffness().assemble(k);
  const Eigen::VectorXd f = testutil::random_vector(n, 10);
  const DofPartition part(n, {{0, 1.0}, {4, 0.5}, {15, -0.2}});

  const auto before = factorization_count();
  const Eigen::VectorXd u = solve_constrained(K, f, part);
  CHECK(factorization_count() == before + 1);

  // dense oracle: replace fixed rows by identity rows
  Eigen::MatrixXd M = Eigen::MatrixXd(K);
  Eigen::VectorXd b = f;
  for (std::size_t i = 0; i < part.fixed().size(); ++i) {
    const int d = part.fixed()[i];
    M.row(d).setZero();
    M(d, d) = 1.0;
    b[d] = part.fixed_values()[static_cast<Eigen::Index>(i)];
  }
  const Eigen::VectorXd oracle = M.fullPivLu().solve(b);
  CHECK((u - oracle).norm() < 1e-11 * oracle.norm());

  CHECK_THROWS_AS(solve_constrained(K, f, DofPartition(n, {})), SingularSystemError);

  const ReducedSolver rs(K, part);
  const Eigen::MatrixXd rhs = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(part.free().size()), 2);
  const Eigen::MatrixXd x = rs.solve(rhs);
  CHECK((Eigen::MatrixXd(rs.free_block()) * x - rhs).norm() < 1e-11);
}

TEST_CASE("Newton converges on a scalar cubic and reports failure") {
  const DofPartition part(2, {{0, 1.0}});
  auto r = [](const Eigen::VectorXd& u) {
    Eigen::VectorXd out(2);
    out << 0.0, u[1] * u[1] * u[1] + u[0] - 9.0;
    return out;
  };
  auto J = [](const Eigen::VectorXd& u) {
    SparseMatrix m(2, 2);
    m.insert(0, 0) = 1.0;
    m.insert(1, 1) = 3.0 * u[1] * u[1];
    return m;
  };
  const NewtonResult res = newton_solve(r, J, part, Eigen::Vector2d(0.0, 5.0), 1e-12, 50);
  CHECK(res.T[0] == 1.0);
  CHECK(res.T[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.residual_history.back() <= 1e-12);
  try {
    newton_solve(r, J, part, Eigen::Vector2d(0.0, 50.0), 1e-12, 2);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual_history().size() == 3);
  }
}
