#include "fol/mlp.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "fol/error.hpp"
#include "fol/rng.hpp"

namespace fol {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "swish") return Activation::Swish;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + name + "' (expected tanh, swish, sigmoid or linear)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Swish: return "swish";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Swish: return x * sigmoid(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Linear: return x;
  }
  return x;
}

double activate_d1(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Swish: {
      const double s = sigmoid(x);
      return s + x * s * (1.0 - s);
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Linear: return 1.0;
  }
  return 1.0;
}

double activate_d2(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Swish: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case Activation::Linear: return 0.0;
  }
  return 0.0;
}

Mlp::Mlp(int input_size, const std::vector<int>& hidden, int output_size, Activation hidden_act)
    : hidden_act_(hidden_act) {
  if (input_size < 1 || output_size < 1) throw ConfigError("network input and output sizes must be >= 1");
  sizes_.clear();
  sizes_.push_back(input_size);
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
    sizes_.push_back(h);
  }
  sizes_.push_back(output_size);
  Eigen::Index off = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  theta_ = Eigen::VectorXd::Zero(off);
  shift_ = Eigen::VectorXd::Zero(input_size);
  scale_ = Eigen::VectorXd::Ones(input_size);
}

void Mlp::initialize(std::uint64_t seed) {
  seed_ = seed;
  for (int l = 0; l < num_layers(); ++l) {
    Rng rng(seed, static_cast<std::uint64_t>(l));
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    auto W = weight(l);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = rng.uniform(-limit, limit);
    }
    bias(l).setZero();
  }
}

Mlp::MatMap Mlp::weight(int layer) {
  return MatMap(theta_.data() + offsets_[static_cast<std::size_t>(layer)], sizes_[layer + 1], sizes_[layer]);
}

Mlp::ConstMatMap Mlp::weight(int layer) const {
  return ConstMatMap(theta_.data() + offsets_[static_cast<std::size_t>(layer)], sizes_[layer + 1],
                     sizes_[layer]);
}

Eigen::Index Mlp::bias_offset(int layer) const {
  return offsets_[static_cast<std::size_t>(layer)] + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer];
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
  return {theta_.data() + bias_offset(layer), sizes_[layer + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {theta_.data() + bias_offset(layer), sizes_[layer + 1]};
}

void Mlp::set_input_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale) {
  if (shift.size() != input_size() || scale.size() != input_size()) {
    throw ConfigError("input normalization size does not match the network input");
  }
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

void Mlp::normalize_inputs_to(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != input_size() || hi.size() != input_size()) {
    throw ConfigError("input bounds size does not match the network input");
  }
  Eigen::VectorXd scale(input_size());
  for (int i = 0; i < input_size(); ++i) {
    const double w = hi[i] - lo[i];
    scale[i] = w > 0.0 ? 2.0 / w : 1.0;
  }
  set_input_normalization(0.5 * (lo + hi), scale);
}

Tape::Tape(const Mlp& net, const Eigen::MatrixXd& C, bool with_jacobian)
    : net_(&net), batch_(static_cast<int>(C.cols())), tangents_(with_jacobian ? net.input_size() : 0) {
  if (C.rows() != net.input_size()) {
    throw ConfigError("network expects " + std::to_string(net.input_size()) + " inputs, got " +
                      std::to_string(C.rows()));
  }
  const int stride = 1 + tangents_;
  const int L = net.num_layers();
  inputs_.resize(static_cast<std::size_t>(L));
  pre_.resize(static_cast<std::size_t>(L));

  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(net.input_size(), static_cast<Eigen::Index>(batch_) * stride);
  for (int s = 0; s < batch_; ++s) {
    const Eigen::Index col = static_cast<Eigen::Index>(s) * stride;
    Z.col(col) = ((C.col(s) - net.input_shift()).array() * net.input_scale().array()).matrix();
    for (int j = 0; j < tangents_; ++j) Z(j, col + 1 + j) = net.input_scale()[j];
  }
  for (int l = 0; l < L; ++l) {
    inputs_[static_cast<std::size_t>(l)] = std::move(Z);
    Eigen::MatrixXd& P = pre_[static_cast<std::size_t>(l)];
    P.noalias() = net.weight(l) * inputs_[static_cast<std::size_t>(l)];
    const auto b = net.bias(l);
    for (int s = 0; s < batch_; ++s) P.col(static_cast<Eigen::Index>(s) * stride) += b;
    if (l + 1 == L) break;
    const Activation act = net.activation(l);
    Z.resize(P.rows(), P.cols());
    for (int s = 0; s < batch_; ++s) {
      const Eigen::Index col = static_cast<Eigen::Index>(s) * stride;
      for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double a = P(i, col);
        Z(i, col) = activate(act, a);
        if (tangents_ > 0) {
          const double d1 = activate_d1(act, a);
          for (int j = 1; j <= tangents_; ++j) Z(i, col + j) = d1 * P(i, col + j);
        }
      }
    }
  }
}

Eigen::VectorXd Tape::value(int sample) const {
  return output().col(static_cast<Eigen::Index>(sample) * (1 + tangents_));
}

Eigen::MatrixXd Tape::jacobian(int sample) const {
  if (tangents_ == 0) throw ConfigError("tape was recorded without input tangents");
  return output().middleCols(static_cast<Eigen::Index>(sample) * (1 + tangents_) + 1, tangents_);
}

void Tape::backward(const Eigen::MatrixXd& output_adjoint, Eigen::VectorXd& grad) const {
  const Mlp& net = *net_;
  if (output_adjoint.rows() != output().rows() || output_adjoint.cols() != output().cols()) {
    throw ConfigError("output adjoint has the wrong shape");
  }
  if (grad.size() != net.num_params()) grad = Eigen::VectorXd::Zero(net.num_params());
  const int stride = 1 + tangents_;
  const int L = net.num_layers();

  Eigen::MatrixXd Pbar = output_adjoint;  // last layer is linear
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::MatrixXd& Zin = inputs_[static_cast<std::size_t>(l)];
    Mlp::MatMap gW(grad.data() + net.weight_offset(l), net.sizes()[l + 1], net.sizes()[l]);
    gW.noalias() += Pbar * Zin.transpose();
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + net.bias_offset(l), net.sizes()[l + 1]);
    for (int s = 0; s < batch_; ++s) gb += Pbar.col(static_cast<Eigen::Index>(s) * stride);
    if (l == 0) break;

    // Adjoint of the previous layer's activated block [z | J] ...
    Eigen::MatrixXd Zbar = net.weight(l).transpose() * Pbar;
    // ... pulled back through the activation to its pre-activation block.
    const Eigen::MatrixXd& P = pre_[static_cast<std::size_t>(l - 1)];
    const Activation act = net.activation(l - 1);
    Pbar.resize(P.rows(), P.cols());
    for (int s = 0; s < batch_; ++s) {
      const Eigen::Index col = static_cast<Eigen::Index>(s) * stride;
      for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const double a = P(i, col);
        const double d1 = activate_d1(act, a);
        double abar = Zbar(i, col) * d1;
        if (tangents_ > 0) {
          const double d2 = activate_d2(act, a);
          double acc = 0.0;
          for (int j = 1; j <= tangents_; ++j) {
            acc += Zbar(i, col + j) * P(i, col + j);
            Pbar(i, col + j) = d1 * Zbar(i, col + j);
          }
          abar += acc * d2;
        }
        Pbar(i, col) = abar;
      }
    }
  }
}

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& c) {
  return Tape(net, c, false).value(0);
}

Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& C) {
  return Tape(net, C, false).output();
}

Eigen::MatrixXd input_jacobian(const Mlp& net, const Eigen::VectorXd& c) {
  return Tape(net, c, true).jacobian(0);
}

Eigen::VectorXd scatter(const Eigen::VectorXd& free_values, const DofPartition& ds) {
  if (free_values.size() != static_cast<Eigen::Index>(ds.free().size())) {
    throw ConfigError("scatter: network output size does not match the free DOF count");
  }
  return ds.scatter(free_values);
}

LossGradient loss_gradient(const Mlp& net, const Eigen::MatrixXd& C, bool with_jacobian,
                           const SampleLossFn& fn, int threads) {
  const Tape tape(net, C, with_jacobian);
  const int B = tape.batch();
  const int stride = 1 + tape.tangents();
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(tape.output().rows(), tape.output().cols());
  std::vector<double> losses(static_cast<std::size_t>(B), 0.0);

  auto run = [&](int begin, int end) {
    Eigen::VectorXd vbar;
    Eigen::MatrixXd jbar;
    for (int s = begin; s < end; ++s) {
      const Eigen::VectorXd v = tape.value(s);
      Eigen::MatrixXd jac;
      if (with_jacobian) jac = tape.jacobian(s);
      vbar = Eigen::VectorXd::Zero(v.size());
      if (with_jacobian) jbar = Eigen::MatrixXd::Zero(jac.rows(), jac.cols());
      losses[static_cast<std::size_t>(s)] =
          fn(s, v, with_jacobian ? &jac : nullptr, vbar, with_jacobian ? &jbar : nullptr);
      const Eigen::Index col = static_cast<Eigen::Index>(s) * stride;
      adj.col(col) = vbar;
      if (with_jacobian) adj.middleCols(col + 1, tape.tangents()) = jbar;
    }
  };

  const int nt = std::max(1, std::min(threads, B));
  if (nt == 1) {
    run(0, B);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      const int begin = static_cast<int>(static_cast<long long>(B) * t / nt);
      const int end = static_cast<int>(static_cast<long long>(B) * (t + 1) / nt);
      pool.emplace_back([&, t, begin, end] {
        try {
          run(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  LossGradient out;
  for (double l : losses) out.loss += l;
  if (!std::isfinite(out.loss)) throw NonFiniteLossError("total", out.loss);
  out.grad = Eigen::VectorXd::Zero(net.num_params());
  tape.backward(adj, out.grad);
  return out;
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg) {
  if (grad.size() != theta.size()) throw ConfigError("adam_step: gradient size mismatch");
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.t = 0;
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// Checkpoint layout (text, one token group per line):
//   fol-mlp 1
//   sizes <n0> <n1> ... <nL>
//   activation <name>
//   seed <u64>
//   shift <values>
//   scale <values>
//   meta <key> <value...>        (zero or more)
//   params <count>
//   <one value per line>
//   end
// Doubles are written in shortest round-trip form.

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ConfigError("checkpoint: bad number '" + tok + "'");
  }
  return v;
}

Eigen::VectorXd read_vector(std::istringstream& is, int n) {
  Eigen::VectorXd v(n);
  std::string tok;
  for (int i = 0; i < n; ++i) {
    if (!(is >> tok)) throw ConfigError("checkpoint: truncated vector");
    v[i] = parse_double(tok);
  }
  return v;
}

}  // namespace

void save_checkpoint(const Mlp& net, std::ostream& os) {
  os << "fol-mlp 1\nsizes";
  for (int s : net.sizes()) os << ' ' << s;
  os << "\nactivation " << to_string(net.hidden_activation()) << "\nseed " << net.seed() << "\nshift";
  for (Eigen::Index i = 0; i < net.input_shift().size(); ++i) os << ' ' << fmt(net.input_shift()[i]);
  os << "\nscale";
  for (Eigen::Index i = 0; i < net.input_scale().size(); ++i) os << ' ' << fmt(net.input_scale()[i]);
  os << '\n';
  for (const auto& [k, v] : net.metadata()) os << "meta " << k << ' ' << v << '\n';
  os << "params " << net.num_params() << '\n';
  for (Eigen::Index i = 0; i < net.num_params(); ++i) os << fmt(net.params()[i]) << '\n';
  os << "end\n";
}

Mlp load_checkpoint(std::istream& is) {
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw ConfigError(std::string("checkpoint: missing ") + what);
    return std::istringstream(line);
  };
  {
    auto ls = next_line("header");
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != "fol-mlp" || version != 1) throw ConfigError("checkpoint: unknown format");
  }
  std::vector<int> sizes;
  {
    auto ls = next_line("sizes");
    std::string key;
    ls >> key;
    if (key != "sizes") throw ConfigError("checkpoint: expected sizes");
    int s = 0;
    while (ls >> s) sizes.push_back(s);
    if (sizes.size() < 2) throw ConfigError("checkpoint: need at least input and output sizes");
  }
  std::string act_name;
  {
    auto ls = next_line("activation");
    std::string key;
    ls >> key >> act_name;
    if (key != "activation") throw ConfigError("checkpoint: expected activation");
  }
  std::uint64_t seed = 0;
  {
    auto ls = next_line("seed");
    std::string key;
    ls >> key >> seed;
    if (key != "seed") throw ConfigError("checkpoint: expected seed");
  }
  Mlp net(sizes.front(), std::vector<int>(sizes.begin() + 1, sizes.end() - 1), sizes.back(),
          parse_activation(act_name));
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
  {
    auto ls = next_line("shift");
    std::string key;
    ls >> key;
    if (key != "shift") throw ConfigError("checkpoint: expected shift");
    shift = read_vector(ls, sizes.front());
  }
  {
    auto ls = next_line("scale");
    std::string key;
    ls >> key;
    if (key != "scale") throw ConfigError("checkpoint: expected scale");
    scale = read_vector(ls, sizes.front());
  }
  net.set_input_normalization(shift, scale);
  for (;;) {
    auto ls = next_line("params");
    std::string key;
    ls >> key;
    if (key == "meta") {
      std::string k;
      ls >> k;
      std::string v;
      std::getline(ls >> std::ws, v);
      net.metadata()[k] = v;
      continue;
    }
    if (key != "params") throw ConfigError("checkpoint: expected params");
    Eigen::Index n = 0;
    ls >> n;
    if (n != net.num_params()) throw ConfigError("checkpoint: parameter count does not match sizes");
    break;
  }
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    next_line("parameter value");
    net.params()[i] = parse_double(line);
  }
  {
    auto ls = next_line("end");
    std::string key;
    ls >> key;
    if (key != "end") throw ConfigError("checkpoint: expected end");
  }
  net.set_seed(seed);
  return net;
}

void save_checkpoint(const Mlp& net, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  save_checkpoint(net, os);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace fol
