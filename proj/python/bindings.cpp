#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "fol/config.hpp"
#include "fol/error.hpp"
#include "fol/losses.hpp"
#include "fol/mesh.hpp"
#include "fol/mlp.hpp"
#include "fol/optimizer.hpp"
#include "fol/parameterization.hpp"
#include "fol/sensitivity.hpp"
#include "fol/thermal.hpp"
#include "fol/training.hpp"

namespace py = pybind11;
using namespace fol;

namespace {

// ThermalSpace is only handed out as shared_ptr<const>, which pybind11 cannot
// hold directly.
struct Space {
  std::shared_ptr<const ThermalSpace> p;
  const Mesh& mesh() const { return p->mesh(); }
};

Space make_space(int nx, int ny, double lx, double ly, int quad_order) {
  return {ThermalSpace::create(build_grid(nx, ny < 0 ? nx : ny, lx, ly), quad_order)};
}

ThermalBVP bvp_for(const Space& s, const Eigen::VectorXd& k, double t_left, double t_right) {
  return make_thermal_bvp(s.p, k, t_left, t_right);
}

py::array_t<double> history_array(const LossHistory& h) {
  py::array_t<double> a({static_cast<py::ssize_t>(h.size()), py::ssize_t{5}});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto r = static_cast<py::ssize_t>(i);
    v(r, 0) = h[i].epoch;
    v(r, 1) = h[i].terms.total;
    v(r, 2) = h[i].terms.physics;
    v(r, 3) = h[i].terms.boundary;
    v(r, 4) = h[i].terms.sensitivity;
  }
  return a;
}

}  // namespace

PYBIND11_MODULE(_folpy, m) {
  m.doc() = "Finite operator learning: FEM-informed parametric surrogates";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::enum_<Activation>(m, "Activation")
      .value("tanh", Activation::Tanh)
      .value("swish", Activation::Swish)
      .value("sigmoid", Activation::Sigmoid)
      .value("linear", Activation::Linear);
  py::enum_<PhysicsLoss>(m, "PhysicsLoss")
      .value("energy", PhysicsLoss::Energy)
      .value("residual", PhysicsLoss::Residual);
  py::enum_<NandMode>(m, "NandMode").value("fem", NandMode::Fem).value("fol", NandMode::Fol);

  py::class_<Mesh>(m, "Mesh")
      .def_property_readonly("num_nodes", &Mesh::num_nodes)
      .def_property_readonly("num_elements", &Mesh::num_elements)
      .def_property_readonly("nx", &Mesh::nx)
      .def_property_readonly("ny", &Mesh::ny)
      .def_property_readonly("x", &Mesh::x)
      .def_property_readonly("y", &Mesh::y);
  m.def("build_grid", &build_grid, py::arg("nx"), py::arg("ny"), py::arg("lx") = 1.0, py::arg("ly") = 1.0);
  m.def("interpolate", &interpolate, py::arg("mesh"), py::arg("nodal"), py::arg("x"), py::arg("y"));

  py::class_<Space>(m, "ThermalSpace")
      .def(py::init(&make_space), py::arg("nx"), py::arg("ny") = -1, py::arg("lx") = 1.0,
           py::arg("ly") = 1.0, py::arg("quad_order") = 2)
      .def_property_readonly("mesh", &Space::mesh, py::return_value_policy::reference_internal);

  py::class_<NonlinearConductivity>(m, "NonlinearConductivity")
      .def(py::init([](double m1, double m2, double beta) { return NonlinearConductivity{m1, m2, beta}; }),
           py::arg("m1") = 2.0, py::arg("m2") = 4.0, py::arg("beta") = 1.0)
      .def_readwrite("m1", &NonlinearConductivity::m1)
      .def_readwrite("m2", &NonlinearConductivity::m2)
      .def_readwrite("beta", &NonlinearConductivity::beta);

  m.def(
      "solve_thermal",
      [](const Space& s, const Eigen::VectorXd& k, double t_left, double t_right,
         std::optional<NonlinearConductivity> nonlinear) {
        ThermalBVP bvp = bvp_for(s, k, t_left, t_right);
        bvp.nonlinear = nonlinear;
        return nonlinear ? solve_newton(bvp).T : solve_linear(bvp);
      },
      py::arg("space"), py::arg("k"), py::arg("t_left") = 1.0, py::arg("t_right") = 0.1,
      py::arg("nonlinear") = std::nullopt,
      "Nodal temperature with the left/right edges held fixed and the rest insulated.");
  m.def(
      "flux",
      [](const Space& s, const Eigen::VectorXd& k, const Eigen::VectorXd& T) {
        return Eigen::MatrixXd(recover_flux(s.mesh(), k, T));
      },
      py::arg("space"), py::arg("k"), py::arg("T"));
  m.def("relative_error", &relative_error, py::arg("pred"), py::arg("ref"));

  py::class_<ProjectionSpec>(m, "ProjectionSpec")
      .def(py::init([](double vmin, double vmax, double beta) { return ProjectionSpec{vmin, vmax, beta}; }),
           py::arg("vmin") = 0.01, py::arg("vmax") = 1.0, py::arg("beta") = 5.0)
      .def_readwrite("vmin", &ProjectionSpec::vmin)
      .def_readwrite("vmax", &ProjectionSpec::vmax)
      .def_readwrite("beta", &ProjectionSpec::beta);
  m.def("project", &project, py::arg("spec"), py::arg("raw"));

  py::class_<FourierDesign>(m, "FourierDesign")
      .def(py::init([](Eigen::VectorXd c, std::vector<double> fx, std::vector<double> fy, ProjectionSpec proj) {
             FourierDesign d;
             d.c = std::move(c);
             d.fx = std::move(fx);
             d.fy = std::move(fy);
             d.projection = proj;
             return d;
           }),
           py::arg("c"), py::arg("fx") = std::vector<double>{3.0, 5.0, 7.0},
           py::arg("fy") = std::vector<double>{2.0, 4.0, 7.0}, py::arg("projection") = ProjectionSpec{})
      .def_readwrite("c", &FourierDesign::c)
      .def_readwrite("fx", &FourierDesign::fx)
      .def_readwrite("fy", &FourierDesign::fy)
      .def_readwrite("projection", &FourierDesign::projection)
      .def_property_readonly("num_coefficients", &FourierDesign::num_coefficients);
  m.def(
      "design_to_nodal",
      [](const FourierDesign& d, const Mesh& mesh) {
        NodalField f = design_to_nodal(d, mesh);
        return py::make_tuple(f.values, f.tangent);
      },
      py::arg("design"), py::arg("mesh"), "(k, dk/dc) at the mesh nodes.");
  m.def("random_coefficients", &gen_random_fourier_samples, py::arg("n"), py::arg("ranges"), py::arg("seed"));

  m.def(
      "sensitivity",
      [](const Space& s, const FourierDesign& d, const std::string& response, const std::string& method,
         double t_left, double t_right) {
        const NodalField k = design_to_nodal(d, s.mesh());
        const ThermalBVP bvp = bvp_for(s, k.values, t_left, t_right);
        const Eigen::VectorXd T = solve_linear(bvp);
        const ResponseFunction rf = parse_response(response);
        if (method == "adjoint") return adjoint_sensitivity(rf, bvp, T, k.tangent);
        if (method == "direct") return direct_sensitivity(rf, bvp, T, k.tangent);
        throw ConfigError("unknown method '" + method + "' (expected adjoint or direct)");
      },
      py::arg("space"), py::arg("design"), py::arg("response") = "flux_y_sq", py::arg("method") = "adjoint",
      py::arg("t_left") = 1.0, py::arg("t_right") = 0.1);
  m.def(
      "response",
      [](const Space& s, const FourierDesign& d, const std::string& response, double t_left, double t_right) {
        const ThermalBVP bvp = bvp_for(s, design_to_nodal(d, s.mesh()).values, t_left, t_right);
        return eval_response(parse_response(response), bvp, solve_linear(bvp));
      },
      py::arg("space"), py::arg("design"), py::arg("response") = "flux_y_sq", py::arg("t_left") = 1.0,
      py::arg("t_right") = 0.1);

  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init([](double w_ph, double w_bc, double w_se, double w_db, PhysicsLoss physics, bool hard_bc) {
             LossWeights w{w_ph, w_bc, w_se, w_db, physics, hard_bc};
             w.validate();
             return w;
           }),
           py::arg("w_ph") = 1.0, py::arg("w_bc") = 0.0, py::arg("w_se") = 0.0, py::arg("w_db") = 10.0,
           py::arg("physics") = PhysicsLoss::Energy, py::arg("hard_bc") = true)
      .def_readwrite("w_ph", &LossWeights::w_ph)
      .def_readwrite("w_bc", &LossWeights::w_bc)
      .def_readwrite("w_se", &LossWeights::w_se)
      .def_readwrite("w_db", &LossWeights::w_db)
      .def_readwrite("physics", &LossWeights::physics)
      .def_readwrite("hard_bc", &LossWeights::hard_bc);

  py::class_<FolSample>(m, "Sample")
      .def_readonly("input", &FolSample::input)
      .def_property_readonly("num_dofs", &FolSample::num_dofs)
      .def("reference", &reference_solution);
  m.def(
      "conductivity_sample",
      [](const Space& s, const FourierDesign& d, double t_left, double t_right,
         std::optional<NonlinearConductivity> nonlinear) {
        FolSample smp = fourier_conductivity_sample(s.p, d, t_left, t_right);
        smp.nonlinear = nonlinear;
        return smp;
      },
      py::arg("space"), py::arg("design"), py::arg("t_left") = 1.0, py::arg("t_right") = 0.1,
      py::arg("nonlinear") = std::nullopt);

  py::class_<Mlp>(m, "Mlp")
      .def(py::init([](int in, std::vector<int> hidden, int out, Activation act, std::uint64_t seed) {
             Mlp net(in, hidden, out, act);
             net.initialize(seed);
             return net;
           }),
           py::arg("input_size"), py::arg("hidden"), py::arg("output_size"),
           py::arg("activation") = Activation::Swish, py::arg("seed") = 1)
      .def_property_readonly("input_size", &Mlp::input_size)
      .def_property_readonly("output_size", &Mlp::output_size)
      .def_property_readonly("sizes", &Mlp::sizes)
      .def_property(
          "params", [](const Mlp& n) { return n.params(); },
          [](Mlp& n, const Eigen::VectorXd& p) {
            if (p.size() != n.num_params()) throw ConfigError("parameter vector has the wrong length");
            n.params() = p;
          })
      .def("__call__", [](const Mlp& n, const Eigen::VectorXd& c) { return forward(n, c); })
      .def("jacobian", [](const Mlp& n, const Eigen::VectorXd& c) { return input_jacobian(n, c); })
      .def("save", py::overload_cast<const Mlp&, const std::string&>(&save_checkpoint))
      .def_static("load", py::overload_cast<const std::string&>(&load_checkpoint));

  m.def(
      "predict",
      [](const Mlp& net, const FolSample& s, const LossWeights& w) {
        return network_to_state(s, w, forward(net, s.input));
      },
      py::arg("net"), py::arg("sample"), py::arg("weights") = LossWeights{},
      "Full nodal state predicted by the network for one sample.");

  m.def(
      "train",
      [](const std::vector<FolSample>& samples, const LossWeights& w, std::vector<int> hidden,
         Activation act, int epochs, int batch_size, double lr, std::uint64_t seed, int threads) {
        NetConfig nc;
        nc.hidden = std::move(hidden);
        nc.activation = act;
        nc.seed = seed;
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.adam.lr = lr;
        tc.seed = seed;
        tc.threads = threads;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_parametric(samples, nc, w, tc);
        }
        return py::make_tuple(std::move(r.net), history_array(r.history));
      },
      py::arg("samples"), py::arg("weights") = LossWeights{}, py::arg("hidden") = std::vector<int>{300, 300},
      py::arg("activation") = Activation::Swish, py::arg("epochs") = 1000, py::arg("batch_size") = 50,
      py::arg("lr") = 1e-3, py::arg("seed") = 1, py::arg("threads") = 1,
      "Physics-informed training; returns (net, history) with history columns "
      "epoch, total, physics, boundary, sensitivity.");

  m.def(
      "evaluate",
      [](const Mlp& net, const std::vector<FolSample>& samples, const LossWeights& w, const Space& s) {
        const EvalReport r = evaluate(net, samples, w, s.mesh());
        std::vector<double> errs;
        for (const auto& row : r.rows) errs.push_back(row.err_T);
        return py::make_tuple(r.mean_err_T, r.max_err_T, errs);
      },
      py::arg("net"), py::arg("samples"), py::arg("weights"), py::arg("space"),
      "(mean, max, per-sample) percent temperature error against FEM.");

  m.def(
      "solve_matrix_free",
      [](const FolSample& s, int epochs, double lr, std::vector<int> hidden, std::uint64_t seed, double rtol) {
        MatrixFreeConfig cfg;
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.hidden = std::move(hidden);
        cfg.seed = seed;
        cfg.rtol = rtol;
        MatrixFreeResult r;
        {
          py::gil_scoped_release release;
          r = solve_matrix_free(s, cfg);
        }
        py::dict d;
        d["T"] = r.T;
        d["epochs_run"] = r.epochs_run;
        d["relative_residual"] = r.relative_residual;
        d["converged"] = r.converged;
        d["history"] = history_array(r.history);
        return d;
      },
      py::arg("sample"), py::arg("epochs") = 1000, py::arg("lr") = 1e-3, py::arg("hidden") = std::vector<int>{1},
      py::arg("seed") = 1, py::arg("rtol") = 1e-8,
      "Fit one instance without assembling or factorizing a matrix.");

  m.def(
      "optimize_nand",
      [](int n, NandMode mode, int iterations, double alpha, double offset, double c0, int fol_initial_epochs,
         int fol_epochs) {
        NandProblem p;
        p.n = n;
        p.offset = offset;
        p.c0 = c0;
        NandOptions o;
        o.mode = mode;
        o.max_iter = iterations;
        o.alpha = alpha;
        o.fol_initial_epochs = fol_initial_epochs;
        o.fol_epochs = fol_epochs;
        NandResult r;
        {
          py::gil_scoped_release release;
          r = optimize_nand(p, o);
        }
        py::dict d;
        d["c"] = r.state.c;
        d["J_start"] = r.J_start;
        d["h_start"] = r.h_start;
        d["J_final"] = r.J_final;
        d["h_final"] = r.h_final;
        d["iterations"] = static_cast<int>(r.state.history.size());
        d["converged"] = r.state.converged;
        return d;
      },
      py::arg("n") = 51, py::arg("mode") = NandMode::Fem, py::arg("iterations") = 100, py::arg("alpha") = 1e-2,
      py::arg("offset") = 0.125, py::arg("c0") = 0.5, py::arg("fol_initial_epochs") = 5000,
      py::arg("fol_epochs") = 200,
      "Maximize the vertical flux under an equality constraint on the horizontal one.");

  m.def(
      "parse_config",
      [](const std::string& text) { return to_ini(parse_config_string(text)); },
      py::arg("text"), "Validate an INI config and return it with every default filled in.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        std::vector<const char*> argv{"fol"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the fol tool in-process; returns (exit code, stdout, stderr).");
}
