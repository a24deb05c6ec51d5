#include "fol/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <ostream>
#include <sstream>

#include "fol/error.hpp"
#include "fol/sensitivity.hpp"
#include "fol/thermal.hpp"
#include "fol/training.hpp"

namespace fol {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// (P^T P)^-1 P^T, pseudo-inverse when P loses column rank.
Eigen::MatrixXd left_inverse(const Eigen::MatrixXd& P, bool& rank_deficient) {
  const Eigen::MatrixXd G = P.transpose() * P;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
  cod.setThreshold(1e-12);
  rank_deficient = cod.rank() < G.rows();
  return cod.pseudoInverse() * P.transpose();
}

}  // namespace

std::vector<int> detect_active(const std::vector<ConstraintType>& types, const Eigen::VectorXd& values,
                               double tol) {
  if (static_cast<Eigen::Index>(types.size()) != values.size())
    throw ConfigError("detect_active: constraint count mismatch");
  std::vector<int> active;
  for (std::size_t j = 0; j < types.size(); ++j)
    if (types[j] == ConstraintType::Equality || values[static_cast<Eigen::Index>(j)] >= -tol)
      active.push_back(static_cast<int>(j));
  return active;
}

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& P, bool* rank_deficient) {
  const Eigen::Index n = P.rows();
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  bool rd = false;
  if (P.cols() > 0) I -= P * left_inverse(P, rd);
  if (rank_deficient) *rank_deficient = rd;
  return I;
}

ProjectionStep projection_step(const Eigen::VectorXd& c, double alpha, const Eigen::VectorXd& dJ_dc,
                               const Eigen::MatrixXd& P, const Eigen::VectorXd& g_active) {
  if (!(alpha > 0.0)) throw ConfigError("projection_step: alpha must be positive");
  if (dJ_dc.size() != c.size() || (P.cols() > 0 && P.rows() != c.size()) || g_active.size() != P.cols())
    throw ConfigError("projection_step: dimension mismatch");
  ProjectionStep r;
  if (P.cols() == 0) {
    r.step = -alpha * dJ_dc;
  } else {
    const Eigen::MatrixXd Pinv = left_inverse(P, r.rank_deficient);
    const Eigen::VectorXd d = dJ_dc - P * (Pinv * dJ_dc);
    r.step = -alpha * d - Pinv.transpose() * g_active;
  }
  r.c = c + r.step;
  return r;
}

OptimState optimize(const OptimProblem& problem, Eigen::VectorXd c0, const OptimOptions& opts) {
  if (!problem.evaluate) throw ConfigError("optimize: no evaluation callback");
  if (!(opts.alpha > 0.0)) throw ConfigError("optimize: alpha must be positive");
  OptimState st;
  st.c = std::move(c0);
  st.alpha = opts.alpha;
  const double sign = opts.maximize ? -1.0 : 1.0;

  for (int it = 0; it <= opts.max_iter; ++it) {
    DesignEvaluation ev = problem.evaluate(st.c);
    const auto m = static_cast<Eigen::Index>(problem.constraints.size());
    if (ev.g.size() != m || (m > 0 && (ev.dg.rows() != st.c.size() || ev.dg.cols() != m)) ||
        ev.dJ.size() != st.c.size())
      throw ConfigError("optimize: evaluation has wrong dimensions");
    if (!std::isfinite(ev.J) || !ev.dJ.allFinite() || !ev.g.allFinite() || !ev.dg.allFinite()) {
      std::ostringstream os;
      os << "optimize: non-finite response at iteration " << it << ", J=" << ev.J << ", c=["
         << st.c.transpose() << "]";
      throw NumericalError(os.str());
    }

    IterRecord rec;
    rec.iter = it;
    rec.J = ev.J;
    rec.g = ev.g;
    rec.phase_time_ms = ev.time_ms;
    st.active = detect_active(problem.constraints, ev.g, opts.active_tol);
    if (opts.on_iterate) opts.on_iterate(it, st.c);

    if (it == opts.max_iter) {
      st.history.push_back(std::move(rec));
      break;
    }
    Eigen::MatrixXd P(st.c.size(), static_cast<Eigen::Index>(st.active.size()));
    Eigen::VectorXd ga(static_cast<Eigen::Index>(st.active.size()));
    for (std::size_t a = 0; a < st.active.size(); ++a) {
      P.col(static_cast<Eigen::Index>(a)) = ev.dg.col(st.active[a]);
      ga[static_cast<Eigen::Index>(a)] = ev.g[st.active[a]];
    }
    ProjectionStep ps = projection_step(st.c, st.alpha, sign * ev.dJ, P, ga);
    if (ps.rank_deficient && !st.rank_warning) {
      std::cerr << "warning: active constraint gradients are rank deficient at iteration " << it
                << ", using the pseudo-inverse\n";
      st.rank_warning = true;
    }
    rec.step_norm = ps.step.norm();
    st.history.push_back(std::move(rec));
    const bool small = ps.step.norm() < opts.step_tol * (1.0 + st.c.norm());
    st.c = std::move(ps.c);
    if (small) {
      st.converged = true;
      // record the final design's responses
      DesignEvaluation fin = problem.evaluate(st.c);
      IterRecord last;
      last.iter = it + 1;
      last.J = fin.J;
      last.g = fin.g;
      last.phase_time_ms = fin.time_ms;
      if (opts.on_iterate) opts.on_iterate(it + 1, st.c);
      st.history.push_back(std::move(last));
      break;
    }
  }
  return st;
}

NandMode parse_nand_mode(const std::string& s) {
  if (s == "fem") return NandMode::Fem;
  if (s == "fol") return NandMode::Fol;
  throw ConfigError("unknown optimizer mode '" + s + "' (expected fem or fol)");
}

std::string to_string(NandMode m) { return m == NandMode::Fem ? "fem" : "fol"; }

namespace {

FourierDesign nand_design(const NandProblem& p, const Eigen::VectorXd& c) {
  FourierDesign d;
  d.fx = p.fx;
  d.fy = p.fy;
  d.projection = p.projection;
  d.c = c;
  return d;
}

struct FemResponses {
  double J, h;
  Eigen::VectorXd dJ, dh;
};

FemResponses fem_responses(const NandProblem& p, const std::shared_ptr<const ThermalSpace>& space,
                           const Eigen::VectorXd& c, bool with_grad) {
  const NodalField k = design_to_nodal(nand_design(p, c), space->mesh());
  const ThermalBVP bvp = make_thermal_bvp(space, k.values, p.t_left, p.t_right);
  const Eigen::VectorXd T = solve_linear(bvp);
  const ResponseFunction rj = ResponseFunction::flux_y();
  const ResponseFunction rh = ResponseFunction::flux_x_constraint(p.offset);
  FemResponses r{eval_response(rj, bvp, T), eval_response(rh, bvp, T), {}, {}};
  if (with_grad) {
    auto g = adjoint_sensitivities({rj, rh}, bvp, T, k.tangent);
    r.dJ = std::move(g[0]);
    r.dh = std::move(g[1]);
  }
  return r;
}

}  // namespace

NandResult optimize_nand(const NandProblem& p, const NandOptions& o) {
  if (p.n < 2) throw ConfigError("optimize_nand: mesh needs at least 2 nodes per side");
  if (o.max_iter < 0) throw ConfigError("optimize_nand: negative iteration cap");
  auto space = ThermalSpace::create(build_grid(p.n, p.n));
  FourierDesign proto = nand_design(p, {});
  const int M = proto.num_coefficients();
  Eigen::VectorXd c0 = Eigen::VectorXd::Zero(M);
  c0[0] = p.c0;

  NandResult res;
  res.mode = o.mode;
  {
    const FemResponses f0 = fem_responses(p, space, c0, false);
    res.J_start = f0.J;
    res.h_start = f0.h;
  }

  OptimProblem prob;
  prob.constraints = {ConstraintType::Equality};

  const LossWeights& w = o.weights;
  w.validate();
  std::optional<Mlp> net;
  bool first = true;

  if (o.mode == NandMode::Fem) {
    prob.evaluate = [&](const Eigen::VectorXd& c) {
      const auto t0 = Clock::now();
      FemResponses f = fem_responses(p, space, c, true);
      DesignEvaluation ev;
      ev.J = f.J;
      ev.dJ = std::move(f.dJ);
      ev.g = Eigen::VectorXd::Constant(1, f.h);
      ev.dg = f.dh;
      ev.time_ms = ms_since(t0);
      return ev;
    };
  } else {
    prob.evaluate = [&](const Eigen::VectorXd& c) {
      const auto t0 = Clock::now();
      const FolSample s = fourier_conductivity_sample(space, nand_design(p, c), p.t_left, p.t_right);
      std::vector<FolSample> batch{s};
      TrainConfig tc;
      tc.batch_size = 1;
      tc.adam.lr = o.lr;
      tc.seed = o.seed;
      tc.epochs = first ? o.fol_initial_epochs : o.fol_epochs;
      if (!net) {
        NetConfig nc;
        nc.hidden = o.hidden.empty() ? std::vector<int>{p.n} : o.hidden;
        nc.activation = o.activation;
        nc.seed = o.seed;
        net = make_network(batch, w, nc);
      }
      train_parametric(*net, batch, w, tc);
      first = false;

      const Eigen::VectorXd T = network_to_state(s, w, forward(*net, s.input));
      const ResponseFunction rj = ResponseFunction::flux_y();
      const ResponseFunction rh = ResponseFunction::flux_x_constraint(p.offset);
      DesignEvaluation ev;
      ev.J = eval_response(rj, *space, s.coef, T);
      ev.g = Eigen::VectorXd::Constant(1, eval_response(rh, *space, s.coef, T));
      ev.dJ = fol_sensitivity(rj, *net, s, w, *space);
      ev.dg = fol_sensitivity(rh, *net, s, w, *space);
      ev.time_ms = ms_since(t0);
      return ev;
    };
  }

  OptimOptions opts;
  opts.max_iter = o.max_iter;
  opts.alpha = o.alpha;
  opts.maximize = true;
  opts.active_tol = o.active_tol;
  opts.on_iterate = o.on_iterate;
  res.state = optimize(prob, c0, opts);

  const FemResponses fin = fem_responses(p, space, res.state.c, false);
  res.J_final = fin.J;
  res.h_final = fin.h;
  return res;
}

void write_optim_history_csv(const NandResult& r, std::ostream& os) {
  os << "iter,J,h,step_norm,phase_time_ms,mode\n";
  const auto old = os.precision(17);
  for (const IterRecord& rec : r.state.history)
    os << rec.iter << ',' << rec.J << ',' << (rec.g.size() ? rec.g[0] : 0.0) << ',' << rec.step_norm << ','
       << rec.phase_time_ms << ',' << to_string(r.mode) << '\n';
  os.precision(old);
}

}  // namespace fol
