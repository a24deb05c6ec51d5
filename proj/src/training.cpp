#include "fol/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <ostream>
#include <thread>

#include "fol/error.hpp"
#include "fol/rng.hpp"
#include "fol/thermal.hpp"

namespace fol {

void write_history_csv(const LossHistory& h, std::ostream& os) {
  os << "epoch,L_total,L_ph,L_bc,L_se\n";
  os.precision(17);
  for (const auto& r : h) {
    os << r.epoch << ',' << r.terms.total << ',' << r.terms.physics << ',' << r.terms.boundary << ','
       << r.terms.sensitivity << '\n';
  }
}

Mlp make_network(const std::vector<FolSample>& samples, const LossWeights& w, const NetConfig& cfg) {
  if (samples.empty()) throw ConfigError("cannot size a network without samples");
  const int in = samples.front().design_size();
  const int out = network_output_size(samples.front(), w);
  Mlp net(in, cfg.hidden, out, cfg.activation);
  net.initialize(cfg.seed);
  if (cfg.normalize_inputs) {
    Eigen::VectorXd lo = samples.front().input;
    Eigen::VectorXd hi = lo;
    for (const auto& s : samples) {
      lo = lo.cwiseMin(s.input);
      hi = hi.cwiseMax(s.input);
    }
    net.normalize_inputs_to(lo, hi);
  }
  return net;
}

namespace {

std::vector<int> shuffled(int n, std::uint64_t seed, int epoch) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

void check_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

// Runs `epochs` of shuffled mini-batch Adam; `step` returns the batch loss
// terms and fills the gradient.
template <class Step>
LossHistory run_epochs(Mlp& net, int n, const TrainConfig& cfg, const LossTerms& initial, Step&& step) {
  LossHistory hist;
  hist.push_back({0, initial});
  AdamState adam;
  Eigen::VectorXd grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled(n, cfg.seed, epoch);
    LossTerms acc;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      LossTerms t;
      try {
        t = step(batch, grad);
      } catch (const NonFiniteLossError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      t *= static_cast<double>(end - start);
      acc += t;
      adam_step(net.params(), grad, adam, cfg.adam);
    }
    acc *= 1.0 / static_cast<double>(n);
    hist.push_back({epoch, acc});
    if (cfg.log_every > 0 && epoch % cfg.log_every == 0) {
      std::cerr << "epoch " << epoch << "  L_total " << acc.total << "  L_ph " << acc.physics << "  L_se "
                << acc.sensitivity << '\n';
    }
  }
  return hist;
}

}  // namespace

LossHistory train_parametric(Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                             const TrainConfig& cfg) {
  check_train_config(cfg);
  w.validate();
  if (samples.empty()) throw ConfigError("no training samples");
  const LossTerms initial = total_loss(net, samples, w, false, cfg.threads).terms;
  return run_epochs(net, static_cast<int>(samples.size()), cfg, initial,
                    [&](const std::vector<int>& batch, Eigen::VectorXd& grad) {
                      BatchLoss b = total_loss(net, samples, batch, w, true, cfg.threads);
                      grad = std::move(b.grad);
                      return b.terms;
                    });
}

TrainResult train_parametric(const std::vector<FolSample>& samples, const NetConfig& net_cfg,
                             const LossWeights& w, const TrainConfig& cfg) {
  TrainResult r{make_network(samples, w, net_cfg), {}};
  r.history = train_parametric(r.net, samples, w, cfg);
  return r;
}

namespace {

Eigen::VectorXd label_target(const FolSample& s, const LossWeights& w, const Eigen::VectorXd& label) {
  if (label.size() != s.num_dofs()) throw ConfigError("label size does not match the sample DOF count");
  return w.hard_bc ? s.dofs.gather_free(label) : label;
}

double data_batch(const Mlp& net, const std::vector<FolSample>& samples,
                  const std::vector<Eigen::VectorXd>& labels, const LossWeights& w,
                  const std::vector<int>& batch, Eigen::VectorXd* grad, int threads) {
  Eigen::MatrixXd C(net.input_size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) C.col(static_cast<Eigen::Index>(b)) = samples[static_cast<std::size_t>(batch[b])].input;
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto fn = [&](int b, const Eigen::VectorXd& v, const Eigen::MatrixXd*, Eigen::VectorXd& vbar, Eigen::MatrixXd*) {
    const auto i = static_cast<std::size_t>(batch[static_cast<std::size_t>(b)]);
    const Eigen::VectorXd d = v - label_target(samples[i], w, labels[i]);
    const double n = static_cast<double>(d.size());
    vbar = (2.0 * inv / n) * d;
    const double l = d.squaredNorm() / n;
    if (!std::isfinite(l)) throw NonFiniteLossError("L_data", l);
    return l * inv;
  };
  if (grad != nullptr) {
    LossGradient lg = loss_gradient(net, C, false, fn, threads);
    *grad = std::move(lg.grad);
    return lg.loss;
  }
  const Eigen::MatrixXd out = forward_batch(net, C);
  double acc = 0.0;
  Eigen::VectorXd dummy;
  for (int b = 0; b < static_cast<int>(batch.size()); ++b) acc += fn(b, out.col(b), nullptr, dummy, nullptr);
  return acc;
}

}  // namespace

double data_loss(const Mlp& net, const std::vector<FolSample>& samples,
                 const std::vector<Eigen::VectorXd>& labels, const LossWeights& w) {
  if (labels.size() != samples.size()) throw ConfigError("label count does not match the sample count");
  if (samples.empty()) return 0.0;
  std::vector<int> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return data_batch(net, samples, labels, w, all, nullptr, 1);
}

LossHistory train_data_driven(Mlp& net, const std::vector<FolSample>& samples,
                              const std::vector<Eigen::VectorXd>& labels, const LossWeights& w,
                              const TrainConfig& cfg) {
  check_train_config(cfg);
  if (labels.size() != samples.size()) throw ConfigError("label count does not match the sample count");
  if (samples.empty()) throw ConfigError("no training samples");
  LossTerms initial;
  initial.total = initial.physics = data_loss(net, samples, labels, w);
  return run_epochs(net, static_cast<int>(samples.size()), cfg, initial,
                    [&](const std::vector<int>& batch, Eigen::VectorXd& grad) {
                      LossTerms t;
                      t.total = t.physics = data_batch(net, samples, labels, w, batch, &grad, cfg.threads);
                      return t;
                    });
}

MatrixFreeResult solve_matrix_free(const FolSample& sample, const MatrixFreeConfig& cfg) {
  sample.validate();
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  LossWeights w;
  w.physics = sample.nonlinear ? PhysicsLoss::Residual : PhysicsLoss::Energy;
  w.hard_bc = true;
  const std::vector<FolSample> one{sample};

  Mlp net(sample.design_size(), cfg.hidden, network_output_size(sample, w), cfg.activation);
  net.initialize(cfg.seed);
  const double mean_bc = sample.dofs.fixed().empty() ? 0.0 : sample.dofs.fixed_values().mean();
  net.bias(net.num_layers() - 1).setConstant(mean_bc);

  auto free_residual = [&](const Eigen::VectorXd& T) {
    return sample.dofs.gather_free(sample_residual(sample, T)).norm();
  };
  auto state = [&] { return network_to_state(sample, w, forward(net, sample.input)); };

  MatrixFreeResult out;
  const double r0 = free_residual(state());
  const double scale = r0 > 0.0 ? r0 : 1.0;
  TrainConfig tc;
  tc.adam.lr = cfg.lr;
  AdamState adam;
  out.history.push_back({0, total_loss(net, one, w, false).terms});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    BatchLoss b;
    try {
      b = total_loss(net, one, w, true);
    } catch (const NonFiniteLossError& e) {
      throw NumericalError("matrix-free solve diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    adam_step(net.params(), b.grad, adam, tc.adam);
    out.history.push_back({epoch, b.terms});
    out.epochs_run = epoch;
    if (cfg.rtol > 0.0 && epoch % 50 == 0 && free_residual(state()) <= cfg.rtol * scale) break;
  }
  out.T = state();
  out.residual_norm = free_residual(out.T);
  out.relative_residual = out.residual_norm / scale;
  out.converged = out.relative_residual <= cfg.rtol;
  return out;
}

std::vector<Eigen::VectorXd> reference_solutions(const std::vector<FolSample>& samples, int threads) {
  std::vector<Eigen::VectorXd> out(samples.size());
  const int n = static_cast<int>(samples.size());
  const int nt = std::max(1, std::min(threads, n));
  auto run = [&](int b, int e) {
    for (int i = b; i < e; ++i) out[static_cast<std::size_t>(i)] = reference_solution(samples[static_cast<std::size_t>(i)]);
  };
  if (nt == 1) {
    run(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        run(n * t / nt, n * (t + 1) / nt);
      } catch (...) {
        errs[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

EvalReport evaluate(const Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                    const Mesh& mesh, const std::vector<Eigen::VectorXd>* references) {
  if (references != nullptr && references->size() != samples.size()) {
    throw ConfigError("reference count does not match the sample count");
  }
  EvalReport rep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const FolSample& s = samples[i];
    if (s.num_dofs() != mesh.num_nodes()) throw ConfigError("evaluate expects scalar thermal samples on the mesh");
    const Eigen::VectorXd ref = references != nullptr ? (*references)[i] : reference_solution(s);
    const Eigen::VectorXd T = network_to_state(s, w, forward(net, s.input));
    const Eigen::MatrixX2d q_ref = recover_flux(mesh, sample_conductivity(s, ref), ref);
    const Eigen::MatrixX2d q = recover_flux(mesh, sample_conductivity(s, T), T);
    const double qn = q_ref.norm() > 0.0 ? q_ref.norm() : 1.0;
    EvalRow row;
    row.sample_id = static_cast<int>(i);
    row.err_T = relative_error(T, ref);
    row.err_qx = 100.0 * (q.col(0) - q_ref.col(0)).norm() / qn;
    row.err_qy = 100.0 * (q.col(1) - q_ref.col(1)).norm() / qn;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) {
    for (const auto& r : rep.rows) {
      rep.mean_err_T += r.err_T;
      rep.max_err_T = std::max(rep.max_err_T, r.err_T);
    }
    rep.mean_err_T /= static_cast<double>(rep.rows.size());
  }
  return rep;
}

void write_eval_csv(const EvalReport& r, std::ostream& os) {
  os << "sample_id,err_T,err_qx,err_qy\n";
  os.precision(10);
  for (const auto& row : r.rows) {
    os << row.sample_id << ',' << row.err_T << ',' << row.err_qx << ',' << row.err_qy << '\n';
  }
}

}  // namespace fol
