import os
import subprocess
import sys

import numpy as np
import pytest

from wncs import _core
from wncs._core import _pure
from wncs.plant import mountain_car

cython_core = pytest.importorskip(
    "wncs._core._speedups", reason="compiled core not built"
)


def rollout_args(horizon=80, sigma=1.0, seed=0):
    model = mountain_car()
    rng = np.random.default_rng(seed)
    return (
        model.A, model.B, model.Q, model.Y, model.eta, False,
        np.array([[-0.4, -0.8, 0.1]]), np.array([sigma]),
        np.array([-10.0]), np.array([10.0]), np.array([-1.5, 0.0]),
        rng.standard_normal((horizon, 2)) * np.sqrt(0.02),
        rng.standard_normal((horizon, 1)),
    )


class TestBackendParity:
    def test_kernel_matrix_close(self):
        ta = np.array([0.0, 1.0, 3.0, 7.0, 20.0])
        tb = np.array([2.0, 5.0])
        a = np.asarray(cython_core.periodic_kernel_matrix(ta, tb, 1.3, 0.8, 12.0))
        b = _pure.periodic_kernel_matrix(ta, tb, 1.3, 0.8, 12.0)
        assert np.allclose(a, b, rtol=1e-13, atol=0.0)

    def test_rollout_trajectories_close(self):
        for seed in range(5):
            args = rollout_args(seed=seed)
            out_c = cython_core.policy_rollout(*args, 100.0)
            out_p = _pure.policy_rollout(*args, 100.0)
            assert out_c[4] == out_p[4]
            n = out_c[4]
            for a, b in zip(out_c[:4], out_p[:4]):
                a = np.asarray(a)[:n]
                b = np.asarray(b)[:n]
                assert np.allclose(a, b, rtol=1e-9, atol=1e-12)

    def test_stop_bound_respected(self):
        args = list(rollout_args(horizon=200, sigma=0.0))
        args[6] = np.zeros((1, 3))  # zero gain: the open loop escapes
        *_, n = cython_core.policy_rollout(*args, 5.0)
        states, *_rest, n2 = _pure.policy_rollout(*args, 5.0)
        assert n == n2 < 200
        assert np.all(np.abs(states[:n]) <= 5.0 * 1.2)

    def test_active_backend_is_cython_here(self):
        assert _core.BACKEND == "cython"
        assert _core.available_backends() == ["cython", "python"]


class TestBackendSelection:
    def test_env_var_forces_pure_python(self):
        env = dict(os.environ, WNCS_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c", "import wncs._core as c; print(c.BACKEND)"],
            capture_output=True, text=True, env=env, check=True,
        )
        assert out.stdout.strip() == "python"
