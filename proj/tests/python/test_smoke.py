import os

import numpy as np
import pytest

import folpy

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "..", "configs")


def test_uniform_solution_is_linear():
    sp = folpy.ThermalSpace(11)
    T = folpy.solve_thermal(sp, np.ones(sp.mesh.num_nodes))
    assert np.allclose(T, 1.0 - 0.9 * sp.mesh.x, atol=1e-12)


def test_nonlinear_solve_stays_in_bounds():
    sp = folpy.ThermalSpace(9)
    T = folpy.solve_thermal(sp, np.ones(sp.mesh.num_nodes), nonlinear=folpy.NonlinearConductivity())
    assert T.min() >= 0.1 - 1e-12 and T.max() <= 1.0 + 1e-12


def test_adjoint_matches_direct():
    sp = folpy.ThermalSpace(9)
    d = folpy.FourierDesign(np.random.default_rng(3).uniform(-1, 1, 10))
    a = folpy.sensitivity(sp, d, method="adjoint")
    b = folpy.sensitivity(sp, d, method="direct")
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_adjoint_against_finite_differences():
    sp = folpy.ThermalSpace(9)
    c = np.random.default_rng(5).uniform(-1, 1, 10)
    g = folpy.sensitivity(sp, folpy.FourierDesign(c), response="flux_x_sq_minus_offset")
    h = 1e-6
    e = np.zeros(10)
    e[4] = h
    fd = (folpy.response(sp, folpy.FourierDesign(c + e), "flux_x_sq_minus_offset")
          - folpy.response(sp, folpy.FourierDesign(c - e), "flux_x_sq_minus_offset")) / (2 * h)
    assert abs(fd - g[4]) <= 1e-6 * max(1.0, abs(g[4]))


def test_train_and_predict():
    sp = folpy.ThermalSpace(7)
    cs = folpy.random_coefficients(8, [(-1.0, 1.0)] * 10, 4)
    samples = [folpy.conductivity_sample(sp, folpy.FourierDesign(c)) for c in cs]
    w = folpy.LossWeights()
    net, hist = folpy.train(samples, w, hidden=[16], epochs=50, batch_size=4, lr=1e-3)
    assert hist.shape == (51, 5)
    assert hist[-1, 1] < hist[0, 1]
    T = folpy.predict(net, samples[0], w)
    assert T.shape == (sp.mesh.num_nodes,)
    mean, worst, per = folpy.evaluate(net, samples, w, sp)
    assert len(per) == 8 and mean <= worst


def test_matrix_free_solve():
    sp = folpy.ThermalSpace(7)
    s = folpy.conductivity_sample(sp, folpy.uniform_design(10))
    r = folpy.solve_matrix_free(s, epochs=3000, lr=1e-2)
    assert folpy.relative_error(r["T"], s.reference()) < 1.0


def test_checkpoint_round_trip(tmp_path):
    net = folpy.Mlp(3, [5], 2, seed=9)
    p = str(tmp_path / "net.ckpt")
    net.save(p)
    back = folpy.Mlp.load(p)
    x = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(net(x), back(x))


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        folpy.LossWeights(w_ph=-1.0)
    with pytest.raises(folpy.ConfigError):
        folpy.parse_config("[mesh]\nnx = 5\n")
    with pytest.raises(ValueError):
        folpy.Mlp(2, [3], 1).params = np.zeros(2)


def test_config_and_cli():
    text = open(os.path.join(CONFIGS, "uniform_thermal.cfg")).read()
    assert "[training]" in folpy.parse_config(text)
    code, out, err = folpy.run_cli(["--help"])
    assert code == 0 and "solve" in out + err
