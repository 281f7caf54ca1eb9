import math

import numpy as np
import pytest

from conftest import StillPolicy, single_ped_scenario
from srfmbench.core import RngStream, Trajectory
from srfmbench.counterfactual import run_twin
from srfmbench.metrics import ade, episode_metrics, frechet, t_test_independent
from srfmbench.policies import make_policy
from srfmbench.scenarios import make_scenario
from srfmbench.sim import SimConfig


def traj(points, agent_id=0, goal_reached_at=None):
    pts = np.asarray(points, dtype=float)
    times = np.arange(len(pts), dtype=float)
    return Trajectory(agent_id, times, pts, goal_reached_at)


def frechet_by_enumeration(a, b):
    """Oracle: minimum over all monotone couplings of the maximum pairwise
    distance, by explicit path enumeration through the coupling grid."""
    n, m = len(a), len(b)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    best = [math.inf]

    def walk(i, j, peak):
        peak = max(peak, d[i, j])
        if peak >= best[0]:
            return  # cannot improve: peaks only grow along a path
        if i == n - 1 and j == m - 1:
            best[0] = peak
            return
        if i + 1 < n:
            walk(i + 1, j, peak)
        if j + 1 < m:
            walk(i, j + 1, peak)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, peak)

    walk(0, 0, 0.0)
    return best[0]


class TestFrechet:
    def test_identical_zero(self):
        t = traj([[0, 0], [1, 0], [2, 1]])
        assert frechet(t, t) == 0.0

    def test_parallel_offset(self):
        a = traj([[0, 0], [1, 0]])
        b = traj([[0, 1], [1, 1]])
        assert frechet(a, b) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a = traj(rng.uniform(-3, 3, (12, 2)))
        b = traj(rng.uniform(-3, 3, (9, 2)))
        assert frechet(a, b) == frechet(b, a)

    def test_lower_bound_endpoints(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = traj(rng.uniform(-3, 3, (int(rng.integers(2, 10)), 2)))
            b = traj(rng.uniform(-3, 3, (int(rng.integers(2, 10)), 2)))
            f = frechet(a, b)
            d0 = np.hypot(*(a.positions[0] - b.positions[0]))
            d1 = np.hypot(*(a.positions[-1] - b.positions[-1]))
            assert f >= max(d0, d1) - 1e-12

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(-3, 3, (8, 2))
        b = rng.uniform(-3, 3, (6, 2))
        shift = np.array([17.0, -4.0])
        assert math.isclose(frechet(traj(a), traj(b)),
                            frechet(traj(a + shift), traj(b + shift)),
                            rel_tol=1e-12)

    def test_oracle_small(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            a = rng.uniform(-5, 5, (int(rng.integers(1, 9)), 2))
            b = rng.uniform(-5, 5, (int(rng.integers(1, 9)), 2))
            assert frechet(traj(a), traj(b)) == frechet_by_enumeration(a, b)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            frechet(Trajectory(0, np.zeros(0), np.zeros((0, 2))),
                    traj([[0, 0]]))


class TestAde:
    def test_identical(self):
        t = traj([[0, 0], [1, 1], [2, 2]])
        assert ade(t, t) == 0.0

    def test_constant_offset(self):
        a = traj([[0, 0], [1, 0], [2, 0]])
        b = traj([[0, 1], [1, 1], [2, 1]])
        assert ade(a, b) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ade(traj([[0, 0], [1, 0]]), traj([[0, 0], [1, 0], [2, 0]]))

    def test_time_grid_mismatch(self):
        a = traj([[0, 0], [1, 0]])
        b = Trajectory(0, np.array([0.0, 2.0]), np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            ade(a, b)

    def test_nonnegative_zero_iff_equal(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(-3, 3, (10, 2))
        b = a.copy()
        b[5] += 1e-9
        assert ade(traj(a), traj(b)) > 0.0


class TestEpisodeMetrics:
    def test_zero_deviation_when_no_robot_force(self, params):
        cfg = SimConfig(params=params.with_values(A_r=0.0))
        twin = run_twin(make_scenario("footpath", 1), make_policy("goal_seek"),
                        cfg, RngStream(1, 1))
        m = episode_metrics(twin)
        assert m.frechet_mean == 0.0

    def test_free_flow_length_time(self, config):
        sc = single_ped_scenario()
        cfg = SimConfig(params=config.params, max_steps=200)
        twin = run_twin(sc, StillPolicy(), cfg, RngStream(0, 1))
        m = episode_metrics(twin)
        # 9 m to the goal center, arrival at the 0.5 m radius boundary, plus
        # tau*v0 = 0.6 m of start-from-rest relaxation lag
        assert abs(m.mean_path_length - 8.5) < 0.05
        assert abs(m.mean_traversal_time - 9.1) <= 2 * cfg.dt + 1e-9

    def test_min_distance_respects_collision_on_success(self, quick_config):
        for seed in range(3):
            twin = run_twin(make_scenario("crosswalk", seed),
                            make_policy("goal_seek"), quick_config,
                            RngStream(seed, 1))
            m = episode_metrics(twin)
            if m.outcome == "success":
                assert m.min_robot_distance >= quick_config.collision_distance


class TestTTest:
    def test_identical_samples(self):
        t, p, sig = t_test_independent([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
        assert t == 0.0
        assert p == 1.0
        assert not sig

    def test_extreme_separation(self):
        t, p, sig = t_test_independent([1, 2, 3, 4, 5],
                                       [11, 12, 13, 14, 15])
        assert sig
        assert p < 1e-4

    def test_textbook_fixture(self):
        # two-sample pooled t test, df = 9 (verified against an independent
        # statistics implementation before freezing)
        a = [101.0, 110.0, 103.0, 93.0, 99.0, 104.0]
        b = [91.0, 102.0, 81.0, 95.0, 97.0]
        t, p, sig = t_test_independent(a, b)
        assert round(t, 4) == 2.0763
        assert round(p, 4) == 0.0677
        assert not sig

    def test_antisymmetric(self):
        a = [1.0, 2.0, 3.5, 2.2]
        b = [4.0, 5.5, 4.8, 6.0]
        t1, p1, _ = t_test_independent(a, b)
        t2, p2, _ = t_test_independent(b, a)
        assert math.isclose(t1, -t2, rel_tol=1e-12)
        assert math.isclose(p1, p2, rel_tol=1e-12)

    def test_degenerate_variance(self):
        with pytest.raises(ValueError):
            t_test_independent([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])

    def test_too_small(self):
        with pytest.raises(ValueError):
            t_test_independent([1.0], [1.0, 2.0])

    def test_welch(self):
        a = [1.0, 2.0, 3.0, 4.0, 20.0]
        b = [1.1, 2.1, 2.9, 4.2]
        t_pooled, _, _ = t_test_independent(a, b)
        t_welch, _, _ = t_test_independent(a, b, welch=True)
        assert t_pooled != t_welch
