#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/losses.hpp"
#include "fol/mlp.hpp"

namespace fol {

struct NetConfig {
  std::vector<int> hidden{300, 300};
  Activation activation = Activation::Swish;
  std::uint64_t seed = 1;
  /// Map the training input bounds onto [-1, 1] (off by default).
  bool normalize_inputs = false;
};

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 50;
  AdamConfig adam;
  std::uint64_t seed = 1;  // shuffling
  int threads = 1;
  int log_every = 0;       // progress lines on stderr every n epochs, 0 = quiet
};

struct EpochRecord {
  int epoch = 0;
  LossTerms terms;
};

/// Epoch 0 holds the loss of the initial network over all samples; epoch
/// e >= 1 the mean of the batch losses seen during that epoch.
using LossHistory = std::vector<EpochRecord>;

void write_history_csv(const LossHistory& h, std::ostream& os);

/// Network sized for the samples (input size, free or all DOFs as output).
Mlp make_network(const std::vector<FolSample>& samples, const LossWeights& w, const NetConfig& cfg);

/// Adam on the physics loss, continuing from `net` (warm start). Throws
/// NumericalError naming the epoch when the loss stops being finite.
LossHistory train_parametric(Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                             const TrainConfig& cfg);

struct TrainResult {
  Mlp net;
  LossHistory history;
};

TrainResult train_parametric(const std::vector<FolSample>& samples, const NetConfig& net_cfg,
                             const LossWeights& w, const TrainConfig& cfg);

/// Supervised baseline: mean squared error against FEM labels on the
/// network's output DOFs (free DOFs with hard BCs). History terms hold the MSE
/// in `total` and `physics`.
LossHistory train_data_driven(Mlp& net, const std::vector<FolSample>& samples,
                              const std::vector<Eigen::VectorXd>& labels, const LossWeights& w,
                              const TrainConfig& cfg);

/// Mean squared error of the network against labels.
double data_loss(const Mlp& net, const std::vector<FolSample>& samples,
                 const std::vector<Eigen::VectorXd>& labels, const LossWeights& w);

struct MatrixFreeConfig {
  std::vector<int> hidden{1};
  Activation activation = Activation::Swish;
  double lr = 1e-3;
  int epochs = 1000;
  std::uint64_t seed = 1;
  /// Stop once the free-DOF residual norm drops below rtol * |f_eff|.
  double rtol = 1e-8;
};

struct MatrixFreeResult {
  Eigen::VectorXd T;
  LossHistory history;
  int epochs_run = 0;
  double residual_norm = 0.0;  // free-DOF |r| of the returned field
  double relative_residual = 0.0;
  bool converged = false;
};

/// Single-instance training: the network is fitted to one sample by
/// minimizing the energy (linear) or residual (nonlinear) loss. Performs no
/// matrix factorization. The output bias starts at the mean prescribed value.
MatrixFreeResult solve_matrix_free(const FolSample& sample, const MatrixFreeConfig& cfg);

struct EvalRow {
  int sample_id = 0;
  double err_T = 0.0;
  double err_qx = 0.0;
  double err_qy = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_err_T = 0.0;
  double max_err_T = 0.0;
};

/// Percent errors of the network against FEM for thermal samples on `mesh`.
/// Flux component errors are normalized by the norm of the whole reference
/// flux field, so a vanishing component does not divide by zero.
EvalReport evaluate(const Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w,
                    const Mesh& mesh, const std::vector<Eigen::VectorXd>* references = nullptr);

void write_eval_csv(const EvalReport& r, std::ostream& os);

/// FEM solutions of all samples.
std::vector<Eigen::VectorXd> reference_solutions(const std::vector<FolSample>& samples, int threads = 1);

}  // namespace fol
