#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fol/fem.hpp"

namespace fol {

enum class Activation { Tanh, Swish, Sigmoid, Linear };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// a(x), a'(x), a''(x) for one scalar.
double activate(Activation a, double x);
double activate_d1(Activation a, double x);
double activate_d2(Activation a, double x);

/// Feed-forward network z^l = a(W^l z^{l-1} + b^l). The last layer is always
/// linear. Parameters live in one flat vector, layer by layer, each layer as
/// W (row-major) followed by b.
class Mlp {
 public:
  Mlp() = default;
  /// hidden: widths of the hidden layers (may be empty for a single affine map).
  Mlp(int input_size, const std::vector<int>& hidden, int output_size, Activation hidden_act);

  /// Glorot-uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  int input_size() const noexcept { return sizes_.front(); }
  int output_size() const noexcept { return sizes_.back(); }
  int num_layers() const noexcept { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const noexcept { return sizes_; }
  Activation hidden_activation() const noexcept { return hidden_act_; }
  Activation activation(int layer) const noexcept {
    return layer + 1 == num_layers() ? Activation::Linear : hidden_act_;
  }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }

  Eigen::Index num_params() const noexcept { return theta_.size(); }
  const Eigen::VectorXd& params() const noexcept { return theta_; }
  Eigen::VectorXd& params() noexcept { return theta_; }

  using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  MatMap weight(int layer);
  ConstMatMap weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  /// Offsets of a layer's W and b inside the flat vector.
  Eigen::Index weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  Eigen::Index bias_offset(int layer) const;

  /// Optional affine input map c -> (c - shift) .* scale, identity by default.
  const Eigen::VectorXd& input_shift() const noexcept { return shift_; }
  const Eigen::VectorXd& input_scale() const noexcept { return scale_; }
  void set_input_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale);
  /// Maps the per-coordinate bounds [lo, hi] onto [-1, 1].
  void normalize_inputs_to(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  /// Free-form training metadata written with the checkpoint.
  std::map<std::string, std::string>& metadata() noexcept { return meta_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return meta_; }

 private:
  std::vector<int> sizes_{0, 0};
  Activation hidden_act_ = Activation::Tanh;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd shift_;
  Eigen::VectorXd scale_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> meta_;
};

/// Network outputs for one input.
Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& c);
/// Outputs for a batch of inputs (one column each).
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& C);
/// d outputs / d c, exact.
Eigen::MatrixXd input_jacobian(const Mlp& net, const Eigen::VectorXd& c);

/// Network outputs placed on the free DOFs, prescribed values on the rest.
Eigen::VectorXd scatter(const Eigen::VectorXd& free_values, const DofPartition& ds);

/// Reverse-mode engine over a batch. Each sample contributes 1 + T columns,
/// its value followed by the T columns of d value / d c when tangents are
/// requested (T = input size), T = 0 otherwise.
class Tape {
 public:
  Tape(const Mlp& net, const Eigen::MatrixXd& C, bool with_jacobian);

  int batch() const noexcept { return batch_; }
  int tangents() const noexcept { return tangents_; }
  /// Output block: output_size x batch*(1+T).
  const Eigen::MatrixXd& output() const noexcept { return pre_.back(); }
  Eigen::VectorXd value(int sample) const;
  /// Only with tangents.
  Eigen::MatrixXd jacobian(int sample) const;

  /// Accumulates dL/dtheta into grad (sized num_params) given the adjoint of
  /// output(), same shape.
  void backward(const Eigen::MatrixXd& output_adjoint, Eigen::VectorXd& grad) const;

 private:
  const Mlp* net_;
  int batch_;
  int tangents_;
  std::vector<Eigen::MatrixXd> inputs_;  // layer inputs [z | J], per layer
  std::vector<Eigen::MatrixXd> pre_;     // pre-activations W [z | J] (+ b on value columns)
};

/// Per-sample loss callback for loss_gradient. It gets the network value
/// (and Jacobian when requested) and must write the adjoints d loss / d value
/// and d loss / d Jacobian; jac / jac_adjoint are null without tangents.
using SampleLossFn = std::function<double(int sample, const Eigen::VectorXd& value,
                                          const Eigen::MatrixXd* jac, Eigen::VectorXd& value_adjoint,
                                          Eigen::MatrixXd* jac_adjoint)>;

struct LossGradient {
  double loss = 0.0;  // sum over the batch
  Eigen::VectorXd grad;
};

/// Exact gradient of sum_s loss_s over the batch. Per-sample callbacks may
/// run on up to `threads` threads; results do not depend on the count.
/// Throws NonFiniteLossError if the loss is not finite.
LossGradient loss_gradient(const Mlp& net, const Eigen::MatrixXd& C, bool with_jacobian,
                           const SampleLossFn& fn, int threads = 1);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long t = 0;
};

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg = {});

/// Text checkpoint, lossless for doubles.
void save_checkpoint(const Mlp& net, std::ostream& os);
Mlp load_checkpoint(std::istream& is);
void save_checkpoint(const Mlp& net, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace fol
