#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "fol/error.hpp"
#include "fol/training.hpp"

using namespace fol;

namespace {

std::shared_ptr<const ThermalSpace> grid(int n) { return ThermalSpace::create(build_grid(n, n)); }

std::vector<FolSample> fourier_samples(const std::shared_ptr<const ThermalSpace>& space,
                                       const std::vector<Eigen::VectorXd>& coeffs) {
  std::vector<FolSample> out;
  for (const auto& c : coeffs) {
    FourierDesign d;
    d.fx = {1.0, 3.0};
    d.fy = {2.0};
    d.c = c;
    out.push_back(fourier_conductivity_sample(space, d));
  }
  return out;
}

std::vector<Eigen::VectorXd> ranged(int n, std::uint64_t seed) {
  return gen_random_fourier_samples(n, std::vector<std::pair<double, double>>(3, {-1.0, 1.0}), seed);
}

TrainConfig quick(int epochs, int batch) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.adam.lr = 1e-2;
  return cfg;
}

}  // namespace

TEST_CASE("parametric training descends and replays bit-exactly") {
  const auto samples = fourier_samples(grid(5), ranged(6, 3));
  const LossWeights w;
  const NetConfig nc{{8}, Activation::Swish, 2, false};
  const TrainResult a = train_parametric(samples, nc, w, quick(60, 4));
  const TrainResult b = train_parametric(samples, nc, w, quick(60, 4));
  TrainConfig threaded = quick(60, 4);
  threaded.threads = 3;
  const TrainResult c = train_parametric(samples, nc, w, threaded);
  REQUIRE(a.history.size() == 61);
  CHECK(a.history.front().epoch == 0);
  CHECK(a.history.back().epoch == 60);
  CHECK(a.history.back().terms.total < a.history.front().terms.total);
  CHECK(total_loss(a.net, samples, w, false).terms.total < a.history.front().terms.total);
  CHECK(a.net.params() == b.net.params());
  CHECK(a.net.params() == c.net.params());
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].terms.total == c.history[e].terms.total);

  // warm start continues from the given parameters
  Mlp warm = a.net;
  train_parametric(warm, samples, w, quick(5, 4));
  CHECK(warm.params() != a.net.params());

  std::ostringstream os;
  write_history_csv(a.history, os);
  CHECK(os.str().rfind("epoch,L_total,L_ph,L_bc,L_se\n0,", 0) == 0);
}

TEST_CASE("data-driven training recovers the least-squares line") {
  // linear network with a 1-D input: each output is an affine function of c,
  // so the minimizer is ordinary least squares per output
  auto space = grid(3);
  const ThermalBVP bvp = make_thermal_bvp(space, Eigen::VectorXd::Ones(9));
  const double cs[5] = {-1.0, -0.3, 0.2, 0.8, 1.5};
  std::vector<FolSample> samples;
  std::vector<Eigen::VectorXd> labels;
  for (int s = 0; s < 5; ++s) {
    samples.push_back(thermal_sample(bvp, Eigen::VectorXd::Constant(1, cs[s])));
    labels.push_back(testutil::random_vector(9, 70 + s, -2.0, 2.0));
  }
  const LossWeights w;
  Mlp net(1, {}, 3, Activation::Linear);
  net.initialize(1);
  TrainConfig cfg = quick(4000, 5);
  cfg.adam.lr = 2e-2;
  train_data_driven(net, samples, labels, w, cfg);

  const std::vector<int>& fr = samples[0].dofs.free();
  REQUIRE(fr.size() == 3);
  double cbar = 0.0;
  for (double c : cs) cbar += c / 5.0;
  double sxx = 0.0;
  for (double c : cs) sxx += (c - cbar) * (c - cbar);
  for (std::size_t i = 0; i < 3; ++i) {
    double ybar = 0.0, sxy = 0.0;
    for (int s = 0; s < 5; ++s) ybar += labels[static_cast<std::size_t>(s)][fr[i]] / 5.0;
    for (int s = 0; s < 5; ++s) sxy += (cs[s] - cbar) * (labels[static_cast<std::size_t>(s)][fr[i]] - ybar);
    const double slope = sxy / sxx;
    const double icpt = ybar - slope * cbar;
    CHECK(net.weight(0)(static_cast<Eigen::Index>(i), 0) == doctest::Approx(slope).epsilon(1e-6));
    CHECK(net.bias(0)[static_cast<Eigen::Index>(i)] == doctest::Approx(icpt).epsilon(1e-6));
  }
  CHECK_THROWS_AS(train_data_driven(net, samples, {}, w, cfg), ConfigError);
}

TEST_CASE("matrix-free solve on uniform conductivity") {
  auto space = grid(21);
  const FolSample s = thermal_sample(make_thermal_bvp(space, Eigen::VectorXd::Ones(441)), Eigen::VectorXd::Zero(1));
  Eigen::VectorXd ref(441);
  for (int i = 0; i < 441; ++i) ref[i] = 1.0 - 0.9 * space->mesh().node(i).x;
  MatrixFreeConfig cfg;
  cfg.epochs = 2000;
  const auto before = factorization_count();
  const MatrixFreeResult r = solve_matrix_free(s, cfg);
  CHECK(factorization_count() == before);
  CHECK(relative_error(r.T, ref) < 0.5);
  for (std::size_t i = 0; i < s.dofs.fixed().size(); ++i) {
    CHECK(r.T[s.dofs.fixed()[i]] == s.dofs.fixed_values()[static_cast<Eigen::Index>(i)]);
  }
  CHECK(r.history.front().epoch == 0);
  CHECK(r.epochs_run <= 2000);
}

TEST_CASE("evaluation: training samples beat unseen ones, empty sets stay empty") {
  auto space = grid(7);
  const auto train = fourier_samples(space, ranged(4, 8));
  const LossWeights w;
  const TrainResult tr = train_parametric(train, NetConfig{{20}, Activation::Swish, 1, false}, w, quick(800, 4));
  const EvalReport on_train = evaluate(tr.net, train, w, space->mesh());
  const auto unseen = fourier_samples(space, gen_unseen_fourier_samples(4, 3, 5));
  const EvalReport on_test = evaluate(tr.net, unseen, w, space->mesh());
  REQUIRE(on_train.rows.size() == 4);
  CHECK(on_train.mean_err_T < on_test.mean_err_T);
  CHECK(on_train.max_err_T >= on_train.mean_err_T);

  const EvalReport empty = evaluate(tr.net, {}, w, space->mesh());
  CHECK(empty.rows.empty());
  std::ostringstream os;
  write_eval_csv(empty, os);
  CHECK(os.str() == "sample_id,err_T,err_qx,err_qy\n");
}

TEST_CASE("divergent training reports the epoch") {
  const auto samples = fourier_samples(grid(4), ranged(2, 1));
  const LossWeights w;
  Mlp net = make_network(samples, w, NetConfig{{4}, Activation::Swish, 1, false});
  TrainConfig cfg = quick(50, 2);
  cfg.adam.lr = 1e200;
  try {
    train_parametric(net, samples, w, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
  cfg.epochs = -1;
  CHECK_THROWS_AS(train_parametric(net, samples, w, cfg), ConfigError);
}
