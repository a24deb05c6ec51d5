#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "fol/error.hpp"
#include "fol/parameterization.hpp"

using namespace fol;

TEST_CASE("sigmoidal projection") {
  const ProjectionSpec spec;  // vmin 0.01, vmax 1, beta 5
  CHECK(project(spec, 0.7) == doctest::Approx(0.7337).epsilon(1e-4));
  CHECK(project(spec, 0.7) == doctest::Approx(0.99 / (1.0 + std::exp(-1.0)) + 0.01).epsilon(1e-15));
  CHECK(project(spec, 0.5) == doctest::Approx(0.505));
  double prev = 0.0;
  for (double r = -50.0; r <= 50.0; r += 0.25) {
    const double v = project(spec, r);
    CHECK(v >= spec.vmin);
    CHECK(v <= spec.vmax);
    CHECK(v >= prev);
    prev = v;
  }
  for (double r : {-0.3, 0.1, 0.5, 0.77, 1.4}) {
    const double fd = (project(spec, r + 1e-6) - project(spec, r - 1e-6)) / 2e-6;
    CHECK(project_derivative(spec, r) == doctest::Approx(fd).epsilon(1e-8));
  }
  CHECK_THROWS_AS((ProjectionSpec{1.0, 0.5, 5.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ProjectionSpec{0.0, 1.0, 0.0}.validate()), ConfigError);
}

TEST_CASE("Fourier basis ordering and values") {
  FourierDesign d;
  d.fx = {3, 5};
  d.fy = {2, 4, 7};
  CHECK(d.num_coefficients() == 7);
  const double x = 0.31, y = 0.62;
  const Eigen::VectorXd b = fourier_basis(d, x, y);
  CHECK(b[0] == 1.0);
  CHECK(b[1] == doctest::Approx(std::cos(3 * x) * std::cos(2 * y)));
  CHECK(b[3] == doctest::Approx(std::cos(3 * x) * std::cos(7 * y)));
  CHECK(b[4] == doctest::Approx(std::cos(5 * x) * std::cos(2 * y)));
  d.full_basis = true;
  CHECK(d.num_coefficients() == 25);
  const Eigen::VectorXd bf = fourier_basis(d, x, y);
  CHECK(bf[1] == doctest::Approx(std::sin(3 * x) * std::cos(2 * y)));
  CHECK(bf[4] == doctest::Approx(std::cos(3 * x) * std::cos(2 * y)));
}

TEST_CASE("Fourier field is even in each axis") {
  FourierDesign d;
  d.c = testutil::random_vector(d.num_coefficients(), 3, -2.0, 2.0);
  for (double x : {0.1, 0.45, 0.9}) {
    for (double y : {0.2, 0.7}) {
      const double v = fourier_field(d, x, y);
      CHECK(fourier_field(d, -x, y) == doctest::Approx(v).epsilon(1e-14));
      CHECK(fourier_field(d, x, -y) == doctest::Approx(v).epsilon(1e-14));
    }
  }
  d.c = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(fourier_field(d, 0.0, 0.0), ConfigError);
  d.c = Eigen::VectorXd::Zero(d.num_coefficients());
  d.fx = {0.0};
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("nodal design tangent matches finite differences") {
  const Mesh m = build_grid(7, 5);
  FourierDesign d;
  d.c = testutil::random_vector(d.num_coefficients(), 11, 0.0, 0.2);
  const NodalField f = design_to_nodal(d, m);
  CHECK(f.values.size() == m.num_nodes());
  CHECK(f.tangent.cols() == d.num_coefficients());
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd dir = testutil::random_vector(d.num_coefficients(), 20 + k);
    auto vals = [&](const Eigen::VectorXd& c) {
      FourierDesign dd = d;
      dd.c = c;
      return design_to_nodal(dd, m).values;
    };
    const Eigen::VectorXd fd = testutil::fd_vector(vals, d.c, dir);
    CHECK(testutil::rel(Eigen::VectorXd(f.tangent * dir), fd) < 1e-8);
  }
  const NodalField q = source_field(d, m, ProjectionSpec{-1.0, 3.0, 2.0});
  CHECK((q.values.array() > -1.0).all());
  CHECK((q.values.array() < 3.0).all());

  const NodalField free = design_to_nodal(NodalDesign{Eigen::VectorXd::Constant(4, 0.3)});
  CHECK(free.tangent.isIdentity());
}

TEST_CASE("max-pool on a 5x5 toy field") {
  // fine values are their own (row-major) index, with one low pixel
  Eigen::VectorXd fine(25);
  for (int i = 0; i < 25; ++i) fine[i] = 100.0 + i;
  fine[12] = 0.01;
  // stride 2: coarse index I pools fine indices {0}, {1,2}, {3,4}
  const std::vector<std::vector<int>> win = {{0}, {1, 2}, {3, 4}};
  Eigen::VectorXd oracle(9);
  for (int J = 0; J < 3; ++J)
    for (int I = 0; I < 3; ++I) {
      double mx = -1.0;
      for (int j : win[static_cast<std::size_t>(J)])
        for (int i : win[static_cast<std::size_t>(I)]) mx = std::max(mx, fine[5 * j + i]);
      oracle[3 * J + I] = mx;
    }
  CHECK(maxpool_downsample(fine, 5, 3) == oracle);
  CHECK(oracle[0] == 100.0);
  CHECK(oracle[4] == 111.0);  // window {6, 7, 11, 12}, 12 is the low pixel
  CHECK(oracle[8] == 124.0);

  // a field of constant k is untouched, a single isolated low pixel is removed
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(21 * 21, 1.0);
  CHECK(maxpool_downsample(flat, 21, 11) == Eigen::VectorXd::Constant(121, 1.0));
  flat[10 * 21 + 10] = 0.01;
  CHECK(maxpool_downsample(flat, 21, 11).minCoeff() == 1.0);
  CHECK_THROWS_AS(maxpool_downsample(flat, 21, 12), ConfigError);
  CHECK_THROWS_AS(maxpool_downsample(Eigen::VectorXd::Zero(5), 21, 11), ConfigError);
}

TEST_CASE("ellipse samples are two-phase and reproducible") {
  EllipseSamplerConfig cfg;
  const auto a = gen_ellipse_samples(4000, cfg, 42);
  const auto b = gen_ellipse_samples(4000, cfg, 42);
  REQUIRE(a.size() == 4000);
  std::vector<int> hist_a(10, 0), hist_b(10, 0);
  for (std::size_t s = 0; s < a.size(); ++s) {
    hist_a[static_cast<std::size_t>(std::min(9, static_cast<int>(a[s].volume_fraction * 10)))]++;
    hist_b[static_cast<std::size_t>(std::min(9, static_cast<int>(b[s].volume_fraction * 10)))]++;
    CHECK(a[s].volume_fraction == b[s].volume_fraction);
  }
  CHECK(hist_a == hist_b);
  for (std::size_t s = 0; s < 50; ++s) {
    const auto& smp = a[s];
    CHECK(smp.design.k.size() == 121);
    for (Eigen::Index i = 0; i < smp.design.k.size(); ++i) {
      CHECK((smp.design.k[i] == cfg.k_low || smp.design.k[i] == cfg.k_high));
    }
    CHECK(smp.ellipses.size() >= 1);
    CHECK(smp.ellipses.size() <= 5);
    CHECK(smp.volume_fraction >= 0.0);
    CHECK(smp.volume_fraction <= 1.0);
    if (smp.ellipses.size() < 2) CHECK(smp.dispersion == 0.0);
  }
  const auto c = gen_ellipse_samples(5, cfg, 43);
  bool differs = false;
  for (int s = 0; s < 5; ++s) differs = differs || c[static_cast<std::size_t>(s)].design.k != a[static_cast<std::size_t>(s)].design.k;
  CHECK(differs);
  CHECK(gen_ellipse_samples(0, cfg, 1).empty());
  CHECK_THROWS_AS(gen_ellipse_samples(-1, cfg, 1), ConfigError);
}

TEST_CASE("rasterized ellipse covers its centre only") {
  const Ellipse e{0.5, 0.5, 0.2, 0.1, 0.0};
  const Eigen::VectorXd k = rasterize_ellipses({e}, 21, 0.01, 1.0);
  CHECK(k[10 * 21 + 10] == 0.01);
  CHECK(k[10 * 21 + 13] == 0.01);  // x = 0.65 inside the long axis
  CHECK(k[13 * 21 + 10] == 1.0);   // y = 0.65 outside the short axis
  CHECK(k[0] == 1.0);
}

TEST_CASE("coefficient samplers") {
  const std::vector<std::pair<double, double>> ranges(10, {-2.0, 2.0});
  const auto s = gen_random_fourier_samples(10000, ranges, 7);
  REQUIRE(s.size() == 10000);
  double lo = 1e9, hi = -1e9;
  for (const auto& v : s) {
    lo = std::min(lo, v.minCoeff());
    hi = std::max(hi, v.maxCoeff());
  }
  CHECK(lo >= -2.0);
  CHECK(hi <= 2.0);
  CHECK(lo < -1.99);
  CHECK(hi > 1.99);
  const auto again = gen_random_fourier_samples(10000, ranges, 7);
  CHECK(again[9999] == s[9999]);
  CHECK(gen_random_fourier_samples(1, ranges, 8)[0] != s[0]);
  CHECK(gen_random_fourier_samples(0, ranges, 7).empty());
  CHECK_THROWS_AS(gen_random_fourier_samples(3, {{1.0, 0.0}}, 7), ConfigError);

  for (const auto& v : gen_unseen_fourier_samples(2000, 10, 3)) {
    CHECK(v.size() == 10);
    CHECK(v.minCoeff() > 5.0);
    CHECK(v.maxCoeff() < 10.0);
  }

  const auto bc = gen_random_bc_samples(500, {{-0.05, 0.05}, {0.0, 0.1}}, 9);
  for (const auto& v : bc) {
    CHECK(std::abs(v[0]) <= 0.05);
    CHECK(v[1] >= 0.0);
    CHECK(v[1] <= 0.1);
  }
}
