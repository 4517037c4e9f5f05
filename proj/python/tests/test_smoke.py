import os
import subprocess

import numpy as np
import pytest

import mctangent as mct


def test_advection_matches_matrix():
    rng = np.random.default_rng(0)
    u = rng.normal(size=16)
    a = mct.advection_matrix(16, 1.0, 1.0 / 16)
    assert np.allclose(mct.advection_tangent(u, 1.0, 1.0 / 16), a @ u, atol=1e-12)


def test_truth_jacobian_matches_finite_differences():
    truth = mct.TruthTangent.burgers(8, 0.05)
    rng = np.random.default_rng(1)
    u = 1.0 + 0.1 * rng.normal(size=truth.state_size)
    d = rng.normal(size=truth.state_size)
    h = 1e-6
    fd = (truth.eval(u + h * d) - truth.eval(u - h * d)) / (2 * h)
    assert np.allclose(truth.jacobian(u) @ d, fd, rtol=1e-5, atol=1e-6)


def test_network_params_round_trip():
    net = mct.TangentNetwork("mlp", "tangent", n=6, hidden=4, init_std=0.2, seed=3)
    assert net.param_names == ["W1", "b1", "W2", "b2"]
    params = net.get_params()
    params[0] = np.zeros_like(params[0])
    net.set_params(params)
    assert np.all(net.get_params()[0] == 0.0)
    with pytest.raises(mct.DimensionError):
        net.set_params(params[:2])


def test_backward_euler_linear_prediction():
    n, dt = 6, 0.1
    net = mct.TangentNetwork("linear", "tangent", n=n, seed=2)
    w, b = net.get_params()
    u0 = np.linspace(-1.0, 1.0, n)
    res = mct.predict(net, u0, scheme="be", dt=dt, steps=5)
    u = u0.copy()
    for _ in range(5):
        u = np.linalg.solve(np.eye(n) - dt * w, u + dt * b)
    assert res["diverged_at"] is None
    assert np.allclose(res["states"][-1], u, atol=1e-10)


def test_linear_optimum_recovers_upwind_matrix():
    g = mct.advection_matrix(8, 1.0, 1.0 / 8)
    u0 = np.random.default_rng(4).normal(size=(8, 20))
    w, b = mct.linear_optimum(g, u0)
    assert np.max(np.abs(w - g)) < 1e-9
    assert np.max(np.abs(b)) < 1e-9


def test_generate_data_shapes_and_validation():
    cfg = {
        "grid.fine_n": 400, "grid.space_stride": 4, "time.fine_steps": 200, "time.T": 0.4,
        "time.time_stride": 2, "data.train_samples": 2, "data.test_samples": 1, "train.n_ckpt": 10,
    }
    train, test = mct.generate_data(cfg)
    assert [t.shape for t in train] == [(101, 100), (101, 100)]
    assert len(test) == 1
    with pytest.raises(mct.ValidationError, match="grid.space_stride"):
        mct.generate_data({**cfg, "grid.space_stride": 3})


def test_array_files(tmp_path):
    a = np.array([[0.0, -0.0], [1.5, 2.0]])
    mct.write_array(str(tmp_path / "a.mct"), a)
    b = mct.read_array(str(tmp_path / "a.mct"))
    assert b.tobytes() == a.tobytes()


def test_cli_exit_codes(tmp_path):
    assert mct.run_cli(["gen-data", "--grid.space_stride", "3", "--output.dir", str(tmp_path)]) == 2
    cli = os.environ.get("MCT_CLI")
    if not cli:
        pytest.skip("MCT_CLI not set")
    proc = subprocess.run([cli, "eval", "--pred", str(tmp_path / "missing.mct"), "--truth", "x", "--out", "y"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert subprocess.run([cli, "--help"], capture_output=True).returncode == 0
