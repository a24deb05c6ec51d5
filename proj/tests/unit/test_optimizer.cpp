#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "fol/error.hpp"
#include "fol/optimizer.hpp"

using namespace fol;

namespace {

// J = 0.5 (c - c*)^T H (c - c*), optionally with linear constraints A^T c - b
OptimProblem quadratic(const Eigen::VectorXd& cstar, const Eigen::VectorXd& h, const Eigen::MatrixXd& A = {},
                       const Eigen::VectorXd& b = {}, std::vector<ConstraintType> types = {}) {
  OptimProblem p;
  p.constraints = std::move(types);
  p.evaluate = [=](const Eigen::VectorXd& c) {
    DesignEvaluation e;
    const Eigen::VectorXd d = c - cstar;
    e.J = 0.5 * d.dot(h.asDiagonal() * d);
    e.dJ = h.asDiagonal() * d;
    if (A.cols() > 0) {
      e.g = A.transpose() * c - b;
      e.dg = A;
    } else {
      e.g = Eigen::VectorXd(0);
      e.dg = Eigen::MatrixXd(c.size(), 0);
    }
    return e;
  };
  return p;
}

}  // namespace

TEST_CASE("active set detection") {
  using enum ConstraintType;
  const std::vector<ConstraintType> types{Equality, Inequality, Inequality, Inequality};
  const Eigen::Vector4d g(0.3, -0.5, -1e-7, 0.2);
  CHECK(detect_active(types, g, 1e-6) == std::vector<int>{0, 2, 3});
  CHECK(detect_active(types, g, 1.0) == std::vector<int>{0, 1, 2, 3});
  CHECK(detect_active({}, Eigen::VectorXd(0), 1e-6).empty());
}

TEST_CASE("projector is symmetric, idempotent and annihilates the constraint gradients") {
  const Eigen::MatrixXd P = Eigen::MatrixXd::Random(6, 2);
  bool deficient = true;
  const Eigen::MatrixXd Pi = projection_matrix(P, &deficient);
  CHECK_FALSE(deficient);
  CHECK((Pi * Pi - Pi).norm() <= 1e-12);
  CHECK((Pi - Pi.transpose()).norm() <= 1e-12);
  CHECK((P.transpose() * Pi).norm() <= 1e-12);

  Eigen::MatrixXd Q(6, 3);
  Q << P, P.col(0) * 2.0;
  const Eigen::MatrixXd Pq = projection_matrix(Q, &deficient);
  CHECK(deficient);
  CHECK((Pq * Pq - Pq).norm() <= 1e-10);
  CHECK((Q.transpose() * Pq).norm() <= 1e-10);
}

TEST_CASE("projected step is orthogonal to the active gradients") {
  const Eigen::VectorXd c = testutil::random_vector(5, 1);
  const Eigen::VectorXd dJ = testutil::random_vector(5, 2);
  const Eigen::VectorXd p = testutil::random_vector(5, 3);
  const ProjectionStep s = projection_step(c, 0.3, dJ, p, Eigen::VectorXd::Zero(1));
  CHECK(std::abs(p.dot(s.step)) <= 1e-10 * p.norm() * s.step.norm());
  CHECK((s.c - (c + s.step)).norm() < 1e-15);
  // without constraints it is plain steepest descent
  const ProjectionStep free = projection_step(c, 0.3, dJ, Eigen::MatrixXd(5, 0), Eigen::VectorXd(0));
  CHECK((free.step + 0.3 * dJ).norm() < 1e-15);
}

TEST_CASE("correction restores linear constraints exactly") {
  const Eigen::VectorXd c = testutil::random_vector(4, 5);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Random(4, 2);
  const Eigen::Vector2d b(0.3, -0.1);
  const Eigen::VectorXd g = A.transpose() * c - b;
  for (double alpha : {1e-3, 0.1, 5.0}) {
    const ProjectionStep s = projection_step(c, alpha, testutil::random_vector(4, 6), A, g);
    CHECK((A.transpose() * s.c - b).norm() <= 1e-12);
  }
  CHECK_THROWS_AS(projection_step(c, 0.0, c, A, g), ConfigError);
}

TEST_CASE("unconstrained quadratic converges to its minimizer") {
  const Eigen::Vector3d cstar(0.5, -1.0, 2.0);
  OptimOptions o;
  o.alpha = 0.1;
  o.max_iter = 200;
  const OptimState st = optimize(quadratic(cstar, Eigen::Vector3d(1.0, 2.0, 3.0)), Eigen::Vector3d::Zero(), o);
  CHECK((st.c - cstar).norm() <= 1e-4);
  CHECK(st.converged);
  for (std::size_t i = 1; i < st.history.size(); ++i) CHECK(st.history[i].J <= st.history[i - 1].J);
}

TEST_CASE("equality-constrained quadratic") {
  // min c1^2 + c2^2 s.t. c1 + c2 = 1
  const Eigen::MatrixXd A = Eigen::Vector2d(1.0, 1.0);
  int calls = 0;
  OptimOptions o;
  o.alpha = 0.1;
  o.on_iterate = [&](int, const Eigen::VectorXd&) { ++calls; };
  const OptimState st = optimize(quadratic(Eigen::Vector2d::Zero(), Eigen::Vector2d(2.0, 2.0), A,
                                           Eigen::VectorXd::Constant(1, 1.0), {ConstraintType::Equality}),
                                 Eigen::Vector2d(0.9, -0.4), o);
  CHECK(st.c[0] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(st.c[1] == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(calls == static_cast<int>(st.history.size()));
  CHECK(st.active == std::vector<int>{0});
  // once feasible, the objective decreases monotonically
  for (std::size_t i = 2; i < st.history.size(); ++i) CHECK(st.history[i].J <= st.history[i - 1].J + 1e-15);
}

TEST_CASE("inactive inequality is ignored, active one is enforced") {
  const Eigen::Vector2d cstar(2.0, 2.0);
  const Eigen::MatrixXd A = Eigen::Vector2d(1.0, 0.0);
  OptimOptions o;
  o.alpha = 0.2;
  o.max_iter = 400;
  // c1 <= 5: never active
  OptimState st = optimize(quadratic(cstar, Eigen::Vector2d(1, 1), A, Eigen::VectorXd::Constant(1, 5.0),
                                     {ConstraintType::Inequality}), Eigen::Vector2d::Zero(), o);
  CHECK((st.c - cstar).norm() < 1e-4);
  // c1 <= 1: active at the solution (1, 2)
  st = optimize(quadratic(cstar, Eigen::Vector2d(1, 1), A, Eigen::VectorXd::Constant(1, 1.0),
                          {ConstraintType::Inequality}), Eigen::Vector2d::Zero(), o);
  CHECK(st.c[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(st.c[1] == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("maximizing -J takes the same steps as minimizing J") {
  const Eigen::Vector3d cstar(1.0, 2.0, -1.0);
  OptimProblem neg = quadratic(cstar, Eigen::Vector3d(1, 1, 2));
  const auto base = neg.evaluate;
  neg.evaluate = [base](const Eigen::VectorXd& c) {
    DesignEvaluation e = base(c);
    e.J = -e.J;
    e.dJ = -e.dJ;
    return e;
  };
  OptimOptions o;
  o.alpha = 0.1;
  o.max_iter = 30;
  const OptimState mn = optimize(quadratic(cstar, Eigen::Vector3d(1, 1, 2)), Eigen::Vector3d::Zero(), o);
  o.maximize = true;
  const OptimState mx = optimize(neg, Eigen::Vector3d::Zero(), o);
  REQUIRE(mn.history.size() == mx.history.size());
  for (std::size_t i = 0; i < mn.history.size(); ++i) {
    CHECK(mn.history[i].step_norm == mx.history[i].step_norm);
    CHECK(mn.history[i].J == -mx.history[i].J);
  }
}

TEST_CASE("duplicate constraints raise the rank warning, non-finite values abort") {
  Eigen::MatrixXd A(2, 2);
  A << 1, 1, 1, 1;
  OptimOptions o;
  o.alpha = 0.1;
  const OptimState st = optimize(quadratic(Eigen::Vector2d::Zero(), Eigen::Vector2d(2, 2), A, Eigen::Vector2d(1, 1),
                                           {ConstraintType::Equality, ConstraintType::Equality}),
                                 Eigen::Vector2d(0.9, -0.4), o);
  CHECK(st.rank_warning);
  CHECK(st.c.sum() == doctest::Approx(1.0).epsilon(1e-10));

  OptimProblem bad;
  bad.evaluate = [](const Eigen::VectorXd& c) {
    DesignEvaluation e;
    e.J = c[0] > 0.05 ? std::nan("") : c[0];
    e.dJ = Eigen::VectorXd::Constant(1, -1.0);
    e.g = Eigen::VectorXd(0);
    e.dg = Eigen::MatrixXd(1, 0);
    return e;
  };
  try {
    optimize(bad, Eigen::VectorXd::Zero(1), o);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("0.1") != std::string::npos);
  }
}

TEST_CASE("NAND problem on a coarse grid") {
  NandProblem prob;
  prob.n = 11;
  NandOptions opt;
  opt.max_iter = 10;
  const NandResult r = optimize_nand(prob, opt);
  CHECK(r.J_final > r.J_start);
  CHECK(std::abs(r.h_final) < 1e-2);
  CHECK(r.state.history.size() == 11);
  std::ostringstream os;
  write_optim_history_csv(r, os);
  CHECK(os.str().rfind("iter,J,h,step_norm,phase_time_ms,mode\n0,", 0) == 0);
  CHECK(parse_nand_mode("fol") == NandMode::Fol);
  CHECK(to_string(NandMode::Fem) == "fem");
  CHECK_THROWS_AS(parse_nand_mode("simp"), ConfigError);
}
