import math

import numpy as np
import pytest

from conftest import StillPolicy, assert_records_ped_equal
from srfmbench.core import AgentState, RngStream, Vec2
from srfmbench.counterfactual import (
    RewardContext,
    TwinRunResult,
    one_step_divergence,
    reward,
    run_twin,
)
from srfmbench.metrics import episode_metrics
from srfmbench.policies import make_policy
from srfmbench.scenarios import PedSpec, Scenario, make_scenario
from srfmbench.sim import SimConfig, replay_episode


def equilibrium_ped(pid=0):
    # walking at its desired velocity, so attraction vanishes
    return AgentState(pid, "pedestrian", Vec2(0, 0), Vec2(1.0, 0.0),
                      Vec2(10, 0), radius=0.3, desired_speed=1.0)


def robot_at(x, y):
    return AgentState(-1, "robot", Vec2(x, y), Vec2(0, 0), Vec2(x, y),
                      radius=0.3, desired_speed=0.0)


class TestRunTwin:
    def test_zero_Ar_bit_identical(self, params):
        cfg = SimConfig(params=params.with_values(A_r=0.0))
        sc = make_scenario("crosswalk", 4)
        twin = run_twin(sc, make_policy("goal_seek"), cfg, RngStream(4, 1))
        assert_records_ped_equal(twin.factual, twin.counterfactual)
        m = episode_metrics(twin)
        assert m.frechet_mean == 0.0
        assert m.frechet_max == 0.0

    def test_far_robot_negligible(self, config):
        # pedestrians 20+ m from a stationary robot: per-ped deviation < 1 mm
        peds = tuple(
            PedSpec(start=Vec2(-10.0, -10.0 + 0.8 * i), goal=Vec2(-3.0, -10.0 + 0.8 * i))
            for i in range(3)
        )
        sc = Scenario(id="footpath", bounds=(-12, -12, 12, 12),
                      pedestrians=peds, robot_start=Vec2(10, 10),
                      robot_goal=Vec2(10, 8), seed=0)
        cfg = SimConfig(params=config.params, max_steps=150)
        twin = run_twin(sc, StillPolicy(), cfg, RngStream(0, 1))
        m = episode_metrics(twin)
        for value in m.frechet_per_ped.values():
            assert value < 1e-3

    def test_crosswalk_deviation_positive(self, config):
        sc = make_scenario("crosswalk", 2)
        twin = run_twin(sc, make_policy("goal_seek"), config, RngStream(2, 1))
        m = episode_metrics(twin)
        assert max(m.frechet_per_ped.values()) > 0.0

    def test_same_robot_path(self, quick_config):
        sc = make_scenario("footpath", 3)
        twin = run_twin(sc, make_policy("dwa"), quick_config, RngStream(3, 1))
        assert np.array_equal(twin.factual.robot.positions,
                              twin.counterfactual.robot.positions)

    def test_counterfactual_matches_direct_replay(self, quick_config):
        from dataclasses import replace

        sc = make_scenario("footpath", 6)
        twin = run_twin(sc, make_policy("goal_seek"), quick_config,
                        RngStream(6, 1))
        direct = replay_episode(
            sc, twin.factual.actions,
            replace(quick_config, robot_force_enabled=False), RngStream(6, 1))
        assert_records_ped_equal(twin.counterfactual, direct)

    def test_reassign_rejected(self, config):
        sc = make_scenario("random", 1)
        with pytest.raises(ValueError):
            run_twin(sc, make_policy("goal_seek"), config, RngStream(1, 1))

    def test_remove_mode_equals_replay(self, quick_config):
        sc = make_scenario("footpath", 8)
        a = run_twin(sc, make_policy("goal_seek"), quick_config,
                     RngStream(8, 1), mode="replay")
        b = run_twin(sc, make_policy("goal_seek"), quick_config,
                     RngStream(8, 1), mode="remove")
        assert_records_ped_equal(a.counterfactual, b.counterfactual)

    def test_bad_mode(self, config):
        with pytest.raises(ValueError):
            run_twin(make_scenario("footpath", 0), make_policy("goal_seek"),
                     config, RngStream(0, 1), mode="teleport")

    def test_degenerate_zero_step_twin(self, config, still_policy=None):
        # robot spawned on its goal: the factual run ends at step 0 and the
        # counterfactual replays an empty action log on the same grid
        from conftest import StillPolicy

        sc = Scenario(
            id="footpath", bounds=(-8, -8, 8, 8),
            pedestrians=(PedSpec(start=Vec2(3.0, 0.0), goal=Vec2(-3.0, 0.0)),),
            robot_start=Vec2(6.0, 6.0), robot_goal=Vec2(6.0, 6.0), seed=0,
        )
        twin = run_twin(sc, StillPolicy(), config, RngStream(0, 1))
        assert twin.factual.outcome == "success"
        assert twin.factual.n_steps == 0
        assert twin.counterfactual.n_steps == 0
        m = episode_metrics(twin)
        assert m.frechet_mean == 0.0
        assert m.mean_path_length == 0.0

    def test_pairing_invariant(self, quick_config):
        sc = make_scenario("footpath", 9)
        twin = run_twin(sc, make_policy("goal_seek"), quick_config,
                        RngStream(9, 1))
        with pytest.raises(ValueError):
            TwinRunResult(twin.factual, twin.counterfactual, twin.pairing[:-1])


class TestOneStepDivergence:
    def test_outside_cutoff_zero(self, params):
        p = equilibrium_ped()
        d = one_step_divergence(p, [p], robot_at(50.0, 0.0), params, 0.1)
        assert d == 0.0

    def test_contact_closed_form(self, params):
        # robot touching dead ahead: divergence = A_r * dt^2, no clamping
        p = equilibrium_ped()
        d = one_step_divergence(p, [p], robot_at(0.6, 0.0), params, 0.1)
        assert math.isclose(d, 7.93 * 0.1 * 0.1, rel_tol=1e-12)

    def test_zero_Ar(self, params):
        p = equilibrium_ped()
        d = one_step_divergence(p, [p], robot_at(1.0, 0.5),
                                params.with_values(A_r=0.0), 0.1)
        assert d == 0.0

    def test_nonnegative_and_positive_inside(self, params):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = AgentState(0, "pedestrian", Vec2(*rng.uniform(-2, 2, 2)),
                           Vec2(*rng.uniform(-1, 1, 2)),
                           Vec2(*rng.uniform(-5, 5, 2)))
            r = robot_at(*rng.uniform(-2, 2, 2))
            d = one_step_divergence(p, [p], r, params, 0.1)
            assert d >= 0.0
            if (p.position - r.position).norm() < 9.0:
                assert d > 0.0

    def test_matches_double_prediction_with_cap(self, params):
        # a configuration where the cap engages: the shortcut |f_r| dt^2
        # no longer applies but the distance stays finite and positive
        p = AgentState(0, "pedestrian", Vec2(0, 0), Vec2(1.25, 0.0),
                       Vec2(10, 0), desired_speed=1.0)
        d = one_step_divergence(p, [p], robot_at(0.6, 0.0), params, 0.1,
                                speed_cap=1.3)
        assert 0.0 < d < 7.93 * 0.01 + 1e-9


class TestReward:
    def test_success(self, config):
        ctx = RewardContext("success", 0.0, 10.0, 0.0)
        total, comp = reward(ctx, config)
        assert total == config.reward_success
        assert comp == {"r_term": 10.0, "r_dist": 0.0, "r_div": 0.0}

    def test_collision_double_timeout(self, config):
        total_c, comp_c = reward(RewardContext("collision", 5.0, 10.0, 0.0),
                                 config)
        total_t, comp_t = reward(RewardContext("timeout", 5.0, 10.0, 0.0),
                                 config)
        assert comp_c["r_term"] == -2.0 * config.reward_timeout
        assert comp_t["r_term"] == -config.reward_timeout
        assert comp_c["r_term"] == 2.0 * comp_t["r_term"]

    def test_halfway(self, config):
        total, comp = reward(RewardContext(None, 5.0, 10.0, 0.0), config)
        assert comp["r_dist"] == 0.5
        assert total == -config.k1 * 0.5

    def test_dist_clamped(self, config):
        _, comp = reward(RewardContext(None, 20.0, 10.0, 0.0), config)
        assert comp["r_dist"] == 1.0

    def test_monotone_in_divergence(self, config):
        totals = [reward(RewardContext(None, 5.0, 10.0, d), config)[0]
                  for d in (0.0, 0.05, 0.1, 0.5)]
        assert all(a > b for a, b in zip(totals, totals[1:]))

    def test_custom_k(self, config):
        total, _ = reward(RewardContext(None, 10.0, 10.0, 0.2), config,
                          k1=0.0, k2=2.0)
        assert math.isclose(total, -0.4, rel_tol=1e-12)


class TestStepReward:
    def test_live_simulation_reward(self, config):
        from srfmbench.sim import Simulation
        from srfmbench.policies import Action

        sc = make_scenario("crosswalk", 1)
        sim = Simulation(sc, config, RngStream(1, 1))
        sim.step(Action(0.5, 0.0))
        total, comp = sim.reward_components()
        assert comp["r_term"] == 0.0
        assert 0.0 < comp["r_dist"] <= 1.0
        assert comp["r_div"] >= 0.0
        assert total == -config.k1 * comp["r_dist"] - config.k2 * comp["r_div"]
