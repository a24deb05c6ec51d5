#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "fol/elasticity.hpp"
#include "fol/error.hpp"

using namespace fol;

namespace {

Mesh distorted_grid(int n) {
  Mesh g = build_grid(n, n);
  auto coords = g.coords();
  Rng rng(5);
  const double h = 1.0 / (n - 1);
  for (int j = 1; j + 1 < n; ++j)
    for (int i = 1; i + 1 < n; ++i) {
      coords[static_cast<std::size_t>(g.node_id(i, j))].x += rng.uniform(-0.2, 0.2) * h;
      coords[static_cast<std::size_t>(g.node_id(i, j))].y += rng.uniform(-0.2, 0.2) * h;
    }
  return Mesh(coords, g.elems());
}

// uniform strain field u = G x
const double G[2][2] = {{0.01, 0.004}, {-0.002, 0.02}};

}  // namespace

TEST_CASE("plane stress constitutive matrix") {
  const double E = 3.0, nu = 0.3;
  const Eigen::Matrix3d C = constitutive_plane_stress(E, nu);
  const double f = E / (1 - nu * nu);
  CHECK(C(0, 0) == doctest::Approx(f));
  CHECK(C(1, 1) == doctest::Approx(f));
  CHECK(C(0, 1) == doctest::Approx(f * nu));
  CHECK(C(1, 0) == doctest::Approx(f * nu));
  CHECK(C(2, 2) == doctest::Approx(f * (1 - nu) / 2));
  CHECK(C(0, 2) == 0.0);
  CHECK(C(1, 2) == 0.0);
  CHECK_THROWS_AS(constitutive_plane_stress(0.0, 0.3), ConfigError);
  CHECK_THROWS_AS(constitutive_plane_stress(1.0, 0.5), ConfigError);
}

TEST_CASE("element stiffness has exactly the three rigid-body modes as null space") {
  auto space = ElasticSpace::create(distorted_grid(3), 0.3);
  const auto& m = space->mesh();
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto K = element_stiffness_elastic(Eigen::Vector4d(1.0, 2.0, 0.5, 1.5), 0.3, space->geometry()[e]);
    CHECK((K - K.transpose()).norm() < 1e-13 * K.norm());
    Eigen::Matrix<double, 8, 3> R;
    for (int a = 0; a < 4; ++a) {
      const auto& p = m.node(m.element(e)[a]);
      R.row(2 * a) << 1, 0, -p.y;
      R.row(2 * a + 1) << 0, 1, p.x;
    }
    CHECK((K * R).norm() < 1e-12 * K.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(K);
    int positive = 0;
    for (int i = 0; i < 8; ++i) positive += es.eigenvalues()[i] > 1e-10 * es.eigenvalues().maxCoeff();
    CHECK(positive == 5);
  }
}

TEST_CASE("table assembly matches a dense element-by-element oracle") {
  auto space = ElasticSpace::create(distorted_grid(4), 0.25);
  const auto& m = space->mesh();
  const Eigen::VectorXd E = testutil::random_vector(m.num_nodes(), 3, 0.1, 2.0);
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(2 * m.num_nodes(), 2 * m.num_nodes());
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto& c = m.element(e);
    const Eigen::Vector4d Ee(E[c[0]], E[c[1]], E[c[2]], E[c[3]]);
    const auto Ke = element_stiffness_elastic(Ee, 0.25, space->geometry()[e]);
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) oracle(2 * c[a / 2] + a % 2, 2 * c[b / 2] + b % 2) += Ke(a, b);
  }
  const Eigen::MatrixXd K(space->stiffness().assemble(E));
  CHECK((K - oracle).norm() < 1e-12 * oracle.norm());
}

TEST_CASE("uniform strain patch test") {
  auto space = ElasticSpace::create(distorted_grid(5), 0.3);
  const auto& m = space->mesh();
  ElasticBVP bvp;
  bvp.space = space;
  bvp.E_nodal = Eigen::VectorXd::Constant(m.num_nodes(), 2.0);
  for (int n = 0; n < m.num_nodes(); ++n) {
    const auto& p = m.node(n);
    if (p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0) {
      bvp.dirichlet.push_back({2 * n, G[0][0] * p.x + G[0][1] * p.y});
      bvp.dirichlet.push_back({2 * n + 1, G[1][0] * p.x + G[1][1] * p.y});
    }
  }
  const ElasticSolution sol = solve_elastic(bvp);
  for (int n = 0; n < m.num_nodes(); ++n) {
    const auto& p = m.node(n);
    CHECK(std::abs(sol.U[2 * n] - (G[0][0] * p.x + G[0][1] * p.y)) < 1e-13);
    CHECK(std::abs(sol.U[2 * n + 1] - (G[1][0] * p.x + G[1][1] * p.y)) < 1e-13);
  }
  const Eigen::Vector3d eps(G[0][0], G[1][1], G[0][1] + G[1][0]);
  const Eigen::Vector3d sig = constitutive_plane_stress(2.0, 0.3) * eps;
  for (int n = 0; n < m.num_nodes(); ++n) {
    CHECK((sol.strain.row(n).transpose() - eps).norm() < 1e-12);
    CHECK((sol.stress.row(n).transpose() - sig).norm() < 1e-12);
  }
  CHECK(displacement_magnitude(sol.U).size() == m.num_nodes());
}

TEST_CASE("top displacement problem and failure modes") {
  auto space = ElasticSpace::create(build_grid(6, 6), 0.3);
  const int n = space->mesh().num_nodes();
  const ElasticBVP bvp = make_top_displacement_bvp(space, Eigen::VectorXd::Ones(n), 0.0, 0.05);
  const ElasticSolution sol = solve_elastic(bvp);
  for (int t : space->mesh().edge_nodes(Edge::Top)) CHECK(sol.U[2 * t + 1] == 0.05);
  for (int b : space->mesh().edge_nodes(Edge::Bottom)) CHECK(sol.U[2 * b] == 0.0);
  // interior vertical displacement lies between the clamped values
  CHECK(sol.U[2 * space->mesh().node_id(3, 3) + 1] > 0.0);
  CHECK(sol.U[2 * space->mesh().node_id(3, 3) + 1] < 0.05);

  ElasticBVP free_body = bvp;
  free_body.dirichlet.clear();
  CHECK_THROWS_AS(solve_elastic(free_body), SingularSystemError);
  ElasticBVP bad = bvp;
  bad.E_nodal[0] = -1.0;
  CHECK_THROWS_AS(solve_elastic(bad), ConfigError);
}
