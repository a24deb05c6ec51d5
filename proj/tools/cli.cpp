#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fol/config.hpp"
#include "fol/elasticity.hpp"
#include "fol/error.hpp"
#include "fol/io.hpp"
#include "fol/losses.hpp"
#include "fol/optimizer.hpp"
#include "fol/parameterization.hpp"
#include "fol/sensitivity.hpp"
#include "fol/thermal.hpp"
#include "fol/training.hpp"

namespace fol::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  int threads = 0;
  std::string out;
};

// State shared by one subcommand run: resolved config, output directory and
// the manifest being assembled.
struct Run {
  std::string command;
  RunConfig cfg;
  fs::path dir;
  Json manifest;
  std::ostream& out;
  Clock::time_point t0 = Clock::now();

  Run(std::string cmd, const CommonArgs& a, std::ostream& os) : command(std::move(cmd)), out(os) {
    cfg = parse_config(a.config);
    for (const auto& o : a.overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + o + "'");
      set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    if (a.threads > 0) cfg.training.threads = a.threads;
    if (!a.out.empty()) cfg.io.output_dir = a.out;
    cfg.validate();
    dir = resolve_output_dir(cfg);
    fs::create_directories(dir);

    const std::string ini = to_ini(cfg);
    out << "# fol " << command << "\n# resolved configuration (config: " << a.config << ")\n";
    std::istringstream lines(ini);
    for (std::string line; std::getline(lines, line);) out << "#   " << line << '\n';
    std::ofstream(dir / "resolved.cfg") << ini;

    manifest["tool"] = "fol";
    manifest["command"] = command;
    manifest["config"] = a.config;
    manifest["resolved_config"] = "resolved.cfg";
    manifest["seeds"] = {{"parameterization", cfg.parameterization.seed},
                         {"network", cfg.network.seed},
                         {"training", cfg.training.seed}};
    manifest["threads"] = cfg.training.threads;
    manifest["outputs"] = Json::array({"resolved.cfg"});
    manifest["results"] = Json::object();
  }

  fs::path output(const std::string& name) {
    manifest["outputs"].push_back(name);
    return dir / name;
  }

  void finish(int code) {
    manifest["exit_code"] = code;
    manifest["wall_time_s"] = std::chrono::duration<double>(Clock::now() - t0).count();
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    out << "wrote " << (dir / "manifest.json").string() << '\n';
  }
};

// ---- builders ---------------------------------------------------------------

Mesh make_mesh(const RunConfig& c) { return build_grid(c.mesh.nx, c.mesh.ny, c.mesh.lx, c.mesh.ly); }

FourierDesign make_design(const RunConfig& c, const Eigen::VectorXd& coeffs) {
  FourierDesign d;
  d.fx = c.parameterization.fx;
  d.fy = c.parameterization.fy;
  d.projection = {c.parameterization.vmin, c.parameterization.vmax, c.parameterization.beta};
  d.c = coeffs;
  d.validate();
  return d;
}

int num_coefficients(const RunConfig& c) {
  FourierDesign d;
  d.fx = c.parameterization.fx;
  d.fy = c.parameterization.fy;
  return d.num_coefficients();
}

Eigen::VectorXd single_coefficients(const RunConfig& c) {
  const auto& v = c.parameterization.coefficients;
  const int M = num_coefficients(c);
  if (static_cast<int>(v.size()) != M)
    throw ConfigError("parameterization.coefficients needs " + std::to_string(M) + " values, got " +
                      std::to_string(v.size()));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), M);
}

// Nodal k (or E) of the single design: uniform value or projected Fourier field.
NodalField single_field(const RunConfig& c, const Mesh& mesh) {
  const std::string& kind = c.parameterization.kind;
  if (kind == "uniform" || kind == "bc") {
    return {Eigen::VectorXd::Constant(mesh.num_nodes(), c.parameterization.value), {}};
  }
  if (kind == "fourier") return design_to_nodal(make_design(c, single_coefficients(c)), mesh);
  throw ConfigError("this command needs parameterization.kind uniform or fourier (got " + kind + ")");
}

bool is_thermal(const RunConfig& c) { return c.physics.kind == "thermal" || c.physics.kind == "nonlinear"; }

ThermalBVP thermal_bvp(const RunConfig& c, std::shared_ptr<const ThermalSpace> space, Eigen::VectorXd k) {
  ThermalBVP bvp = make_thermal_bvp(std::move(space), std::move(k), c.physics.t_left, c.physics.t_right);
  if (c.physics.kind == "nonlinear") bvp.nonlinear = NonlinearConductivity{c.physics.m1, c.physics.m2, c.physics.beta};
  return bvp;
}

struct Spaces {
  std::shared_ptr<const ThermalSpace> thermal;
  std::shared_ptr<const ElasticSpace> elastic;
  const Mesh& mesh() const { return thermal ? thermal->mesh() : elastic->mesh(); }
};

Spaces make_spaces(const RunConfig& c) {
  Spaces s;
  if (is_thermal(c))
    s.thermal = ThermalSpace::create(make_mesh(c), c.mesh.quad_order);
  else
    s.elastic = ElasticSpace::create(make_mesh(c), c.physics.nu, c.mesh.quad_order);
  return s;
}

FolSample make_sample(const RunConfig& c, const Spaces& sp, const Eigen::VectorXd& input) {
  const std::string& kind = c.parameterization.kind;
  if (is_thermal(c)) {
    if (kind == "fourier") {
      NodalField k = design_to_nodal(make_design(c, input), sp.mesh());
      return thermal_sample(thermal_bvp(c, sp.thermal, k.values), input, std::move(k.tangent));
    }
    if (kind == "ellipse") {
      if (input.size() != sp.mesh().num_nodes()) throw ConfigError("ellipse corpus does not match the mesh");
      return thermal_sample(thermal_bvp(c, sp.thermal, input), input);
    }
    if (kind == "uniform") {
      const Eigen::VectorXd k = Eigen::VectorXd::Constant(sp.mesh().num_nodes(), input[0]);
      return thermal_sample(thermal_bvp(c, sp.thermal, k), input,
                            Eigen::MatrixXd::Ones(sp.mesh().num_nodes(), 1));
    }
  } else if (kind == "bc") {
    if (input.size() != 2) throw ConfigError("bc corpus rows need two displacement components");
    const Eigen::VectorXd E = Eigen::VectorXd::Constant(sp.mesh().num_nodes(), c.parameterization.value);
    return elastic_bc_sample(sp.elastic, E, input[0], input[1]);
  }
  throw ConfigError("physics " + c.physics.kind + " cannot be combined with parameterization " + kind);
}

std::vector<FolSample> make_samples(const RunConfig& c, const Spaces& sp, const std::vector<Eigen::VectorXd>& in) {
  std::vector<FolSample> out;
  out.reserve(in.size());
  for (const auto& x : in) out.push_back(make_sample(c, sp, x));
  return out;
}

// Training (test=false) or held-out corpus from the configured sampler.
Corpus generate_corpus(const RunConfig& c, bool test) {
  const auto& z = c.parameterization;
  const int n = test ? z.test_samples : z.samples;
  const std::uint64_t seed = test ? z.seed + 1 : z.seed;
  Corpus out;
  out.kind = z.kind;
  if (z.kind == "fourier") {
    const int M = num_coefficients(c);
    out.inputs = test ? gen_unseen_fourier_samples(n, M, seed)
                      : gen_random_fourier_samples(n, std::vector<std::pair<double, double>>(
                                                           static_cast<std::size_t>(M), {z.sample_lo, z.sample_hi}),
                                                   seed);
  } else if (z.kind == "ellipse") {
    if (c.mesh.nx != c.mesh.ny) throw ConfigError("ellipse sampling needs a square mesh");
    EllipseSamplerConfig ec;
    ec.coarse_n = c.mesh.nx;
    ec.fine_n = (c.mesh.nx - 1) * 4 + 1;
    ec.k_high = z.vmax;
    ec.k_low = z.vmin;
    for (auto& s : gen_ellipse_samples(n, ec, seed)) out.inputs.push_back(std::move(s.design.k));
  } else if (z.kind == "bc") {
    out.inputs = gen_random_bc_samples(n, {{z.sample_lo, z.sample_hi}, {z.sample_lo, z.sample_hi}}, seed);
  } else {
    throw ConfigError("no sampler for parameterization.kind " + z.kind);
  }
  return out;
}

Corpus load_or_generate(const RunConfig& c, bool test) {
  const std::string& path = test ? c.io.test_corpus : c.io.corpus;
  if (path.empty()) return generate_corpus(c, test);
  Corpus k = read_corpus_csv(fs::path(path));
  if (!k.kind.empty() && k.kind != c.parameterization.kind)
    throw ConfigError("corpus " + path + " holds " + k.kind + " samples but parameterization.kind is " +
                      c.parameterization.kind);
  return k;
}

LossWeights loss_weights(const RunConfig& c) {
  LossWeights w;
  w.w_ph = c.loss.w_ph;
  w.w_bc = c.loss.w_bc;
  w.w_se = c.loss.w_se;
  w.w_db = c.loss.w_db;
  w.physics = parse_physics_loss(c.loss.physics);
  w.hard_bc = c.loss.hard_bc;
  w.validate();
  return w;
}

NetConfig net_config(const RunConfig& c) {
  NetConfig n;
  n.hidden = c.network.hidden;
  n.activation = parse_activation(c.network.activation);
  n.seed = c.network.seed;
  n.normalize_inputs = c.network.normalize_inputs;
  return n;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.training.epochs;
  t.batch_size = c.training.batch_size;
  t.adam = {c.training.lr, c.training.beta1, c.training.beta2, c.training.eps};
  t.seed = c.training.seed;
  t.threads = c.training.threads;
  t.log_every = c.training.log_every;
  return t;
}

FieldTable thermal_table(const Mesh& mesh, const Eigen::VectorXd& T, const Eigen::VectorXd& k) {
  const Eigen::MatrixX2d q = recover_flux(mesh, k, T);
  FieldTable t{{"T", "qx", "qy", "k"}, Eigen::MatrixXd(mesh.num_nodes(), 4), {"K", "W/m^2", "W/m^2", "W/mK"}};
  t.values << T, q.col(0), q.col(1), k;
  return t;
}

void write_field(Run& r, const Mesh& mesh, const FieldTable& t, const std::string& stem) {
  write_field_csv(mesh, t, r.output(stem + ".csv"));
  if (r.cfg.io.vtk) write_field_vtk(mesh, t, r.output(stem + ".vtk"), stem);
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v << '%';
  return os.str();
}

// ---- subcommands --------------------------------------------------------------

int cmd_solve(Run& r) {
  const RunConfig& c = r.cfg;
  const Spaces sp = make_spaces(c);
  const Mesh& mesh = sp.mesh();
  const NodalField field = single_field(c, mesh);
  if (is_thermal(c)) {
    const ThermalBVP bvp = thermal_bvp(c, sp.thermal, field.values);
    Eigen::VectorXd T;
    if (bvp.nonlinear) {
      NewtonResult nr = solve_newton(bvp);
      T = std::move(nr.T);
      r.manifest["results"]["newton_iterations"] = nr.residual_history.size();
      r.out << "newton: " << nr.residual_history.size() << " residual evaluations, final |r| = "
            << nr.residual_history.back() << '\n';
    } else {
      T = solve_linear(bvp);
    }
    write_field(r, mesh, thermal_table(mesh, T, effective_conductivity(bvp, T)), "solution");
    r.out << "T in [" << T.minCoeff() << ", " << T.maxCoeff() << "] on " << mesh.num_nodes() << " nodes\n";
    r.manifest["results"]["T_min"] = T.minCoeff();
    r.manifest["results"]["T_max"] = T.maxCoeff();
  } else {
    const ElasticBVP bvp = make_top_displacement_bvp(sp.elastic, field.values, c.physics.ux, c.physics.uy);
    const ElasticSolution sol = solve_elastic(bvp);
    const int n = mesh.num_nodes();
    FieldTable t{{"ux", "uy", "sxx", "syy", "sxy"}, Eigen::MatrixXd(n, 5), {"m", "m", "Pa", "Pa", "Pa"}};
    for (int i = 0; i < n; ++i) {
      t.values(i, 0) = sol.U[2 * i];
      t.values(i, 1) = sol.U[2 * i + 1];
      t.values.block(i, 2, 1, 3) = sol.stress.row(i);
    }
    write_field(r, mesh, t, "solution");
    const double umax = displacement_magnitude(sol.U).maxCoeff();
    r.out << "max |u| = " << umax << " on " << n << " nodes\n";
    r.manifest["results"]["u_max"] = umax;
  }
  std::ofstream mesh_csv(r.output("mesh.csv"));
  write_mesh_csv(mesh, mesh_csv);
  return kOk;
}

int cmd_samplegen(Run& r) {
  const Corpus train = generate_corpus(r.cfg, false);
  const Corpus test = generate_corpus(r.cfg, true);
  write_corpus_csv(train.inputs, train.kind, r.output("corpus.csv"));
  write_corpus_csv(test.inputs, test.kind, r.output("test_corpus.csv"));
  r.out << "samples: " << train.inputs.size() << " training, " << test.inputs.size() << " held-out ("
        << train.kind << ")\n";
  r.manifest["results"]["samples"] = train.inputs.size();
  r.manifest["results"]["test_samples"] = test.inputs.size();
  if (train.kind == "ellipse") {
    const Mesh mesh = make_mesh(r.cfg);
    std::ofstream os(r.output("corpus_stats.csv"));
    os << "sample_id,volume_fraction\n";
    for (std::size_t s = 0; s < train.inputs.size(); ++s) {
      const auto& k = train.inputs[s];
      os << s << ',' << format_double(double((k.array() <= r.cfg.parameterization.vmin).count()) / double(k.size()))
         << '\n';
    }
  }
  return kOk;
}

struct Evaluation {
  double mean_T = 0.0, max_T = 0.0, mean_qx = 0.0, mean_qy = 0.0;
};

Evaluation evaluate_thermal(const Mlp& net, const std::vector<FolSample>& test, const LossWeights& w,
                            const Mesh& mesh, const std::vector<Eigen::VectorXd>& refs, std::ostream* csv) {
  const EvalReport rep = evaluate(net, test, w, mesh, &refs);
  if (csv) write_eval_csv(rep, *csv);
  Evaluation e{rep.mean_err_T, rep.max_err_T, 0.0, 0.0};
  for (const auto& row : rep.rows) {
    e.mean_qx += row.err_qx;
    e.mean_qy += row.err_qy;
  }
  if (!rep.rows.empty()) {
    e.mean_qx /= double(rep.rows.size());
    e.mean_qy /= double(rep.rows.size());
  }
  return e;
}

int cmd_train(Run& r) {
  const RunConfig& c = r.cfg;
  const Spaces sp = make_spaces(c);
  const LossWeights w = loss_weights(c);
  const Corpus corpus = load_or_generate(c, false);
  if (corpus.inputs.empty()) throw ConfigError("train: the corpus is empty");
  const std::vector<FolSample> samples = make_samples(c, sp, corpus.inputs);
  r.out << "training on " << samples.size() << " samples\n";
  TrainResult tr = train_parametric(samples, net_config(c), w, train_config(c));
  tr.net.metadata()["physics"] = c.physics.kind;
  tr.net.metadata()["parameterization"] = c.parameterization.kind;
  tr.net.metadata()["loss"] = c.loss.physics;
  tr.net.metadata()["epochs"] = std::to_string(c.training.epochs);
  save_checkpoint(tr.net, r.output("model.ckpt").string());
  {
    std::ofstream os(r.output("history.csv"));
    write_history_csv(tr.history, os);
  }
  const auto& last = tr.history.back().terms;
  r.out << "final loss " << last.total << " (physics " << last.physics << ", sensitivity " << last.sensitivity
        << ")\n";
  r.manifest["results"]["final_loss"] = last.total;

  const Corpus test = load_or_generate(c, true);
  if (test.inputs.empty()) return kOk;
  const std::vector<FolSample> ts = make_samples(c, sp, test.inputs);
  const auto refs = reference_solutions(ts, c.training.threads);
  if (is_thermal(c)) {
    std::ofstream os(r.output("eval.csv"));
    const Evaluation e = evaluate_thermal(tr.net, ts, w, sp.mesh(), refs, &os);
    r.out << "held-out Err(T): mean " << pct(e.mean_T) << ", max " << pct(e.max_T) << '\n';
    r.manifest["results"]["mean_err_T"] = e.mean_T;
    r.manifest["results"]["max_err_T"] = e.max_T;
  } else {
    std::ofstream os(r.output("eval.csv"));
    os << "sample_id,err_U\n";
    double mean = 0.0;
    for (std::size_t s = 0; s < ts.size(); ++s) {
      const Eigen::VectorXd U = network_to_state(ts[s], w, forward(tr.net, ts[s].input));
      const double e = relative_error(U, refs[s]);
      mean += e / double(ts.size());
      os << s << ',' << format_double(e) << '\n';
    }
    r.out << "held-out Err(U): mean " << pct(mean) << '\n';
    r.manifest["results"]["mean_err_U"] = mean;
  }
  return kOk;
}

FolSample single_sample(const RunConfig& c, const Spaces& sp) {
  if (c.parameterization.kind == "uniform") return make_sample(c, sp, Eigen::VectorXd::Constant(1, c.parameterization.value));
  if (c.parameterization.kind == "fourier") return make_sample(c, sp, single_coefficients(c));
  throw ConfigError("this command needs parameterization.kind uniform or fourier");
}

int cmd_solve_mf(Run& r) {
  const RunConfig& c = r.cfg;
  if (!is_thermal(c)) throw ConfigError("solve-mf supports thermal and nonlinear physics");
  const Spaces sp = make_spaces(c);
  const FolSample s = single_sample(c, sp);
  MatrixFreeConfig mf;
  mf.hidden = c.network.hidden;
  mf.activation = parse_activation(c.network.activation);
  mf.seed = c.network.seed;
  mf.lr = c.training.lr;
  mf.epochs = c.training.epochs;
  const long before = factorization_count();
  const MatrixFreeResult res = solve_matrix_free(s, mf);
  const long used = factorization_count() - before;
  const Eigen::VectorXd ref = reference_solution(s);
  const double err = relative_error(res.T, ref);

  const Mesh& mesh = sp.mesh();
  FieldTable t{{"T_fol", "T_fem", "abs_err"}, Eigen::MatrixXd(mesh.num_nodes(), 3), {"K", "K", "K"}};
  t.values << res.T, ref, (res.T - ref).cwiseAbs();
  write_field(r, mesh, t, "solution_mf");
  {
    std::ofstream os(r.output("history_mf.csv"));
    write_history_csv(res.history, os);
  }
  r.out << "matrix-free: " << res.epochs_run << " epochs, relative residual " << res.relative_residual
        << ", Err(T) vs FEM " << pct(err) << ", factorizations during training " << used << '\n';
  r.manifest["results"] = {{"epochs_run", res.epochs_run},       {"relative_residual", res.relative_residual},
                           {"converged", res.converged},         {"err_T", err},
                           {"training_factorizations", used}};
  return kOk;
}

struct SensitivityArgs {
  std::string mode = "all";
  std::string response = "flux_x_sq_minus_offset";
  std::string model;
  bool check = false;
  double fol_tol = 0.1;
};

int cmd_sensitivity(Run& r, const SensitivityArgs& a) {
  const RunConfig& c = r.cfg;
  if (c.physics.kind != "thermal" || c.parameterization.kind != "fourier")
    throw ConfigError("sensitivity needs physics.kind = thermal and parameterization.kind = fourier");
  ResponseFunction rf = parse_response(a.response);
  if (rf.kind == ResponseKind::FluxXSqMinusOffset) rf.offset = c.optimizer.offset;
  const Spaces sp = make_spaces(c);
  const Eigen::VectorXd coeffs = single_coefficients(c);
  const NodalField k = design_to_nodal(make_design(c, coeffs), sp.mesh());
  const ThermalBVP bvp = thermal_bvp(c, sp.thermal, k.values);
  const Eigen::VectorXd T = solve_linear(bvp);
  const double J = eval_response(rf, bvp, T);
  r.out << to_string(rf) << " = " << J << '\n';
  r.manifest["results"]["response"] = to_string(rf);
  r.manifest["results"]["value"] = J;

  SensitivityTable table;
  const Eigen::VectorXd adj = adjoint_sensitivity(rf, bvp, T, k.tangent);
  table.names.push_back("dJ_dc_adjoint");
  table.columns.push_back(adj);
  const bool want_direct = a.mode == "direct" || a.mode == "all";
  const bool want_fol = a.mode == "fol" || a.mode == "all";
  Eigen::VectorXd direct, fol;
  if (want_direct) {
    direct = direct_sensitivity(rf, bvp, T, k.tangent);
    table.names.push_back("dJ_dc_direct");
    table.columns.push_back(direct);
  }
  if (want_fol) {
    const LossWeights w = loss_weights(c);
    const FolSample s = make_sample(c, sp, coeffs);
    Mlp net;
    if (!a.model.empty()) {
      net = load_checkpoint(a.model);
    } else {
      net = make_network({s}, w, net_config(c));
      TrainConfig tc = train_config(c);
      tc.batch_size = 1;
      train_parametric(net, {s}, w, tc);
    }
    fol = fol_sensitivity(rf, net, s, w, *sp.thermal);
    table.names.push_back("dJ_dc_fol");
    table.columns.push_back(fol);
  }
  if (want_direct) {
    table.names.push_back(want_fol ? "rel_err_direct" : "rel_err");
    table.columns.push_back(entrywise_relative_error(adj, direct));
  }
  if (want_fol) {
    table.names.push_back(want_direct ? "rel_err_fol" : "rel_err");
    table.columns.push_back(entrywise_relative_error(adj, fol));
  }
  {
    std::ofstream os(r.output("sensitivity.csv"));
    write_sensitivity_csv(table, os);
  }
  if (sp.mesh().num_nodes() <= 10000) {
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(sp.mesh().num_nodes(), sp.mesh().num_nodes());
    std::ofstream os(r.output("sensitivity_nodal.csv"));
    write_nodal_sensitivity_csv(sp.mesh(), adjoint_sensitivity(rf, bvp, T, I), os);
  }

  bool ok = true;
  if (want_direct) {
    const double d = relative_difference(adj, direct);
    const double worst = entrywise_relative_error(adj, direct).maxCoeff();
    r.out << "adjoint vs direct: relative difference " << d << ", worst entry " << worst << '\n';
    r.manifest["results"]["rel_diff_direct"] = d;
    r.manifest["results"]["max_entry_rel_err_direct"] = worst;
    ok = ok && worst <= 1e-10;
  }
  if (want_fol) {
    const double d = relative_difference(adj, fol);
    r.out << "adjoint vs fol: relative difference " << pct(100.0 * d) << '\n';
    r.manifest["results"]["rel_diff_fol"] = d;
    ok = ok && d <= a.fol_tol;
  }
  if (a.check && !ok) {
    r.out << "assertion failed\n";
    return kAssertFailed;
  }
  return kOk;
}

struct OptimizeArgs {
  std::string mode;
  int iterations = -1;
};

int cmd_optimize(Run& r, const OptimizeArgs& a) {
  const RunConfig& c = r.cfg;
  if (c.physics.kind != "thermal") throw ConfigError("optimize needs physics.kind = thermal");
  if (c.mesh.nx != c.mesh.ny || c.mesh.lx != 1.0 || c.mesh.ly != 1.0)
    throw ConfigError("optimize runs on the unit square with nx = ny");
  NandProblem p;
  p.n = c.mesh.nx;
  p.fx = c.parameterization.fx;
  p.fy = c.parameterization.fy;
  p.projection = {c.parameterization.vmin, c.parameterization.vmax, c.parameterization.beta};
  p.t_left = c.physics.t_left;
  p.t_right = c.physics.t_right;
  p.offset = c.optimizer.offset;
  p.c0 = c.optimizer.c0;

  NandOptions o;
  o.mode = parse_nand_mode(a.mode.empty() ? c.optimizer.mode : a.mode);
  o.max_iter = a.iterations >= 0 ? a.iterations : c.optimizer.iterations;
  o.alpha = c.optimizer.alpha;
  o.active_tol = c.optimizer.active_tol;
  o.fol_initial_epochs = c.optimizer.fol_initial_epochs;
  o.fol_epochs = c.optimizer.fol_epochs;
  o.hidden = c.optimizer.hidden;
  o.activation = parse_activation(c.network.activation);
  o.lr = c.training.lr;
  o.weights = loss_weights(c);
  o.weights.w_se = c.optimizer.w_se;
  o.seed = c.network.seed;

  const Mesh mesh = make_mesh(c);
  const int every = c.io.snapshot_every;
  if (every > 0) fs::create_directories(r.dir / "snapshots");
  o.on_iterate = [&](int it, const Eigen::VectorXd& cv) {
    if (every <= 0 || it % every != 0) return;
    const NodalField k = design_to_nodal(make_design(c, cv), mesh);
    char name[64];
    std::snprintf(name, sizeof name, "snapshots/design_%04d.vtk", it);
    write_field_vtk(mesh, FieldTable{{"k"}, k.values, {"W/mK"}}, r.output(name), "design");
  };

  r.out << "NAND optimization, mode " << to_string(o.mode) << ", " << o.max_iter << " iterations, alpha "
        << o.alpha << '\n';
  const NandResult res = optimize_nand(p, o);
  {
    std::ofstream os(r.output("opt_history.csv"));
    write_optim_history_csv(res, os);
  }
  {
    auto space = ThermalSpace::create(mesh);
    const NodalField k = design_to_nodal(make_design(c, res.state.c), mesh);
    const ThermalBVP bvp = thermal_bvp(c, space, k.values);
    write_field(r, mesh, thermal_table(mesh, solve_linear(bvp), k.values), "final_solution");
    std::ofstream os(r.output("final_design.csv"));
    write_corpus_csv({res.state.c}, "fourier", os);
  }
  double total_ms = 0.0;
  for (const auto& h : res.state.history) total_ms += h.phase_time_ms;
  r.out << "J: " << res.J_start << " -> " << res.J_final << " (FEM check), h: " << res.h_start << " -> "
        << res.h_final << ", iterations " << res.state.history.size() - 1
        << (res.state.converged ? " (converged)" : "") << ", analysis time " << total_ms / 1000.0 << " s\n";
  r.manifest["results"] = {{"mode", to_string(o.mode)},   {"J_start", res.J_start},
                           {"J_final", res.J_final},      {"h_start", res.h_start},
                           {"h_final", res.h_final},      {"iterations", res.state.history.size() - 1},
                           {"converged", res.state.converged}, {"analysis_time_s", total_ms / 1000.0}};
  return kOk;
}

int cmd_compare(Run& r, bool check) {
  const RunConfig& c = r.cfg;
  if (!is_thermal(c)) throw ConfigError("compare supports thermal physics");
  const Spaces sp = make_spaces(c);
  const LossWeights w = loss_weights(c);
  const std::vector<FolSample> train = make_samples(c, sp, load_or_generate(c, false).inputs);
  const std::vector<FolSample> test = make_samples(c, sp, load_or_generate(c, true).inputs);
  if (train.empty() || test.empty()) throw ConfigError("compare needs training and held-out samples");
  const int threads = c.training.threads;
  const auto train_refs = reference_solutions(train, threads);
  const auto test_refs = reference_solutions(test, threads);

  r.out << "physics-driven training on " << train.size() << " samples\n";
  TrainResult phys = train_parametric(train, net_config(c), w, train_config(c));
  r.out << "data-driven training on the same samples\n";
  Mlp data = make_network(train, w, net_config(c));
  train_data_driven(data, train, train_refs, w, train_config(c));

  std::ofstream pe(r.output("eval_physics.csv"));
  std::ofstream de(r.output("eval_data.csv"));
  const Evaluation ep = evaluate_thermal(phys.net, test, w, sp.mesh(), test_refs, &pe);
  const Evaluation ed = evaluate_thermal(data, test, w, sp.mesh(), test_refs, &de);
  {
    std::ofstream os(r.output("compare.csv"));
    os << "model,mean_err_T,max_err_T,mean_err_qx,mean_err_qy\n";
    for (const auto& [name, e] : {std::pair{"physics", ep}, std::pair{"data", ed}})
      os << name << ',' << format_double(e.mean_T) << ',' << format_double(e.max_T) << ','
         << format_double(e.mean_qx) << ',' << format_double(e.mean_qy) << '\n';
  }
  r.out << std::left << std::setw(10) << "model" << std::setw(14) << "mean Err(T)" << std::setw(14) << "max Err(T)"
        << std::setw(14) << "Err(qx)" << "Err(qy)\n";
  for (const auto& [name, e] : {std::pair{"physics", ep}, std::pair{"data", ed}})
    r.out << std::setw(10) << name << std::setw(14) << pct(e.mean_T) << std::setw(14) << pct(e.max_T)
          << std::setw(14) << pct(e.mean_qx) << pct(e.mean_qy) << '\n';
  r.manifest["results"] = {{"physics_mean_err_T", ep.mean_T}, {"data_mean_err_T", ed.mean_T}};
  if (check && ep.mean_T > ed.mean_T) {
    r.out << "assertion failed: physics-driven error exceeds data-driven error\n";
    return kAssertFailed;
  }
  return kOk;
}

int cmd_export(Run& r, const std::string& input, const std::string& name) {
  const RunConfig& c = r.cfg;
  const Mesh mesh = make_mesh(c);
  const FieldCsv in = read_field_csv(fs::path(input));
  if (in.xy.rows() != mesh.num_nodes()) throw ConfigError("export: the field does not match the configured mesh");
  for (int i = 0; i < mesh.num_nodes(); ++i)
    if (std::abs(in.xy(i, 0) - mesh.node(i).x) > 1e-12 || std::abs(in.xy(i, 1) - mesh.node(i).y) > 1e-12)
      throw ConfigError("export: node coordinates differ from the configured mesh");
  const Mesh fine = build_grid(c.io.export_n, c.io.export_n, c.mesh.lx, c.mesh.ly);
  FieldTable t{in.table.names, Eigen::MatrixXd(fine.num_nodes(), in.table.values.cols()), {}};
  for (Eigen::Index j = 0; j < t.values.cols(); ++j) t.values.col(j) = upsample(mesh, in.table.values.col(j), fine);
  write_field(r, fine, t, name);
  r.out << "upsampled " << t.names.size() << " fields to " << c.io.export_n << "x" << c.io.export_n << '\n';
  return kOk;
}

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("-c,--config", a.config, "configuration file")->required()->check(CLI::ExistingFile);
  sub->add_option("--set", a.overrides, "override a key, section.key=value (repeatable)");
  sub->add_option("--threads", a.threads, "worker threads; 1 is bit-reproducible")->check(CLI::PositiveNumber);
  sub->add_option("-o,--out", a.out, "output directory (default io.output_dir, then $FOL_OUTPUT_DIR, then .)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite operator learning: FEM, physics-driven operator training, sensitivities, optimization", "fol"};
  app.require_subcommand(1);
  CommonArgs common;
  SensitivityArgs sens;
  OptimizeArgs optim;
  bool compare_check = false;
  std::string export_input, export_name = "export";

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"solve", "FEM solution of the configured problem (thermal, nonlinear or elastic)"},
      {"samplegen", "write training and held-out design corpora"},
      {"train", "train the parametric operator on the physics loss"},
      {"solve-mf", "fit a network to one design without any matrix factorization"},
      {"sensitivity", "compare adjoint, direct and network-based design sensitivities"},
      {"optimize", "gradient-projection design optimization (FEM- or network-driven)"},
      {"compare", "physics-driven versus data-driven error table on held-out designs"},
      {"export", "resample a nodal field CSV onto a finer grid"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& e : entries) {
    subs[e.name] = app.add_subcommand(e.name, e.help);
    add_common(subs[e.name], common);
  }
  subs["sensitivity"]->add_option("--mode", sens.mode, "adjoint | direct | fol | all")
      ->check(CLI::IsMember({"adjoint", "direct", "fol", "all"}));
  subs["sensitivity"]->add_option("--response", sens.response, "flux_y_sq | flux_x_sq_minus_offset");
  subs["sensitivity"]->add_option("--model", sens.model, "checkpoint for fol mode (default: train on the design)");
  subs["sensitivity"]->add_flag("--assert", sens.check, "exit 4 unless adjoint and direct agree to 1e-10 and fol to --fol-tol");
  subs["sensitivity"]->add_option("--fol-tol", sens.fol_tol, "relative tolerance for the fol check");
  subs["optimize"]->add_option("--mode", optim.mode, "fem | fol (default optimizer.mode)")
      ->check(CLI::IsMember({"fem", "fol"}));
  subs["optimize"]->add_option("--iterations", optim.iterations, "iteration cap (default optimizer.iterations)");
  subs["compare"]->add_flag("--assert", compare_check, "exit 4 if the physics-driven mean error is larger");
  subs["export"]->add_option("-i,--input", export_input, "field CSV written by solve")->required()->check(CLI::ExistingFile);
  subs["export"]->add_option("--name", export_name, "output file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    if (e.get_name() != "CallForHelp") err << app.help();
    return kConfigError;
  }

  std::string name;
  for (const auto& [n, sub] : subs)
    if (sub->parsed()) name = n;

  try {
    Run r(name, common, out);
    int code = kOk;
    if (name == "solve") code = cmd_solve(r);
    else if (name == "samplegen") code = cmd_samplegen(r);
    else if (name == "train") code = cmd_train(r);
    else if (name == "solve-mf") code = cmd_solve_mf(r);
    else if (name == "sensitivity") code = cmd_sensitivity(r, sens);
    else if (name == "optimize") code = cmd_optimize(r, optim);
    else if (name == "compare") code = cmd_compare(r, compare_check);
    else if (name == "export") code = cmd_export(r, export_input, export_name);
    r.finish(code);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fol::cli
