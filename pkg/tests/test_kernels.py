import os
import subprocess
import sys

import numpy as np
import pytest

from srfmbench import _kernels_py, kernels
from srfmbench.forces import PsiSwitches, SrfmParams

speedups = pytest.importorskip("srfmbench._speedups")


def random_state(rng, n, overlap=False):
    pos = rng.uniform(-6, 6, (n, 2))
    if overlap and n >= 2:
        pos[1] = pos[0]  # exercise the overlap tie-break
    vel = rng.uniform(-1.2, 1.2, (n, 2))
    vel[rng.uniform(size=n) < 0.2] = 0.0  # some stationary agents
    goal = rng.uniform(-6, 6, (n, 2))
    v0 = rng.uniform(0.0, 1.5, n)
    radius = np.full(n, 0.3)
    ids = np.arange(n, dtype=np.longlong)
    return pos, vel, goal, v0, radius, ids


def run_both(state, robot_on, robot_xy, obstacles, params, psi,
             dt=0.1, cap=1.3, goal_radius=0.5, cutoff=10.0):
    pos, vel, goal, v0, radius, ids = state
    n = pos.shape[0]
    outs = []
    for mod in (_kernels_py, speedups):
        op = np.empty((n, 2))
        ov = np.empty((n, 2))
        mod.step_pedestrians_arrays(
            pos, vel, goal, v0, radius, ids, robot_on,
            robot_xy[0], robot_xy[1], 0.3, -1, obstacles, params, psi,
            dt, cap, goal_radius, cutoff, op, ov,
        )
        outs.append((op, ov))
    return outs


class TestStepKernelEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_bit_identical(self, seed):
        rng = np.random.default_rng(seed)
        state = random_state(rng, 12, overlap=seed % 3 == 0)
        obstacles = (rng.uniform(-4, 4, (2, 3)) if seed % 2 == 0
                     else np.zeros((0, 3)))
        if obstacles.shape[0]:
            obstacles[:, 2] = 0.5
        params = SrfmParams(
            A_p=float(rng.uniform(0, 4)), B_p=float(rng.uniform(0.3, 2)),
            lam=float(rng.uniform(0, 1)), tau=float(rng.uniform(0.2, 1.5)),
            A_r=float(rng.choice([0.0, 7.93])), B_r=0.99,
        )
        psi = PsiSwitches(
            pedestrian=bool(seed % 2), robot=True, obstacle=bool(seed % 3),
        )
        (p1, v1), (p2, v2) = run_both(state, True, (0.5, -0.5), obstacles,
                                      params, psi)
        assert np.array_equal(p1, p2)
        assert np.array_equal(v1, v2)

    def test_speed_cap_engaged(self):
        rng = np.random.default_rng(99)
        state = random_state(rng, 6)
        # crowd everyone together so repulsions exceed the cap
        state[0][:] = rng.uniform(-0.5, 0.5, (6, 2))
        (p1, v1), (p2, v2) = run_both(state, True, (0.0, 0.0),
                                      np.zeros((0, 3)), SrfmParams(),
                                      PsiSwitches())
        assert np.array_equal(v1, v2)
        speeds = np.hypot(v1[:, 0], v1[:, 1])
        assert np.all(speeds <= 1.3 + 1e-12)

    def test_empty_crowd(self):
        state = (np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)),
                 np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.longlong))
        (p1, v1), (p2, v2) = run_both(state, True, (0.0, 0.0),
                                      np.zeros((0, 3)), SrfmParams(),
                                      PsiSwitches())
        assert p1.shape == (0, 2) and p2.shape == (0, 2)


class TestFrechetKernelEquivalence:
    @pytest.mark.parametrize("seed", range(6))
    def test_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-5, 5, (int(rng.integers(1, 60)), 2))
        b = rng.uniform(-5, 5, (int(rng.integers(1, 60)), 2))
        assert _kernels_py.frechet_arrays(a, b) == speedups.frechet_arrays(a, b)

    def test_single_points(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[3.0, 4.0]])
        assert speedups.frechet_arrays(a, b) == 5.0
        assert _kernels_py.frechet_arrays(a, b) == 5.0

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            speedups.frechet_arrays(np.zeros((0, 2)), np.zeros((1, 2)))
        with pytest.raises(ValueError):
            _kernels_py.frechet_arrays(np.zeros((0, 2)), np.zeros((1, 2)))


class TestBackendSelection:
    def test_compiled_available_here(self):
        assert "compiled" in kernels.available_backends()

    def test_env_override(self):
        code = ("import srfmbench.kernels as k; print(k.BACKEND)")
        env = dict(os.environ, SRFMBENCH_NO_EXT="1")
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"


_EPISODE_HASH_CODE = """
import hashlib
import srfmbench.kernels as kernels
from srfmbench.core import RngStream
from srfmbench.policies import make_policy
from srfmbench.scenarios import make_scenario
from srfmbench.sim import SimConfig, run_episode

record = run_episode(make_scenario("crosswalk", 5), make_policy("dwa"),
                     SimConfig(max_steps=200), RngStream(5, 1))
print(kernels.BACKEND, hashlib.sha256(record.to_jsonl().encode()).hexdigest())
"""


def test_full_episode_bit_identical_across_backends():
    # entire episodes, not just single kernel calls, must agree bitwise
    hashes = {}
    for disable in ("0", "1"):
        env = dict(os.environ, SRFMBENCH_NO_EXT=disable)
        out = subprocess.run([sys.executable, "-c", _EPISODE_HASH_CODE],
                             env=env, capture_output=True, text=True,
                             check=True)
        backend, digest = out.stdout.split()
        hashes[backend] = digest
    assert set(hashes) == {"compiled", "python"}
    assert hashes["compiled"] == hashes["python"]
