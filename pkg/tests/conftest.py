import math

import numpy as np
import pytest

from srfmbench.core import RngStream, Vec2
from srfmbench.forces import SrfmParams
from srfmbench.policies import Action, PolicyContext
from srfmbench.scenarios import PedSpec, Scenario
from srfmbench.sim import SimConfig


@pytest.fixture
def params():
    return SrfmParams(A_p=2.0, B_p=0.89, lam=0.4, tau=0.6, A_r=7.93, B_r=0.99)


@pytest.fixture
def config(params):
    return SimConfig(params=params)


@pytest.fixture
def quick_config(params):
    return SimConfig(params=params, max_steps=120)


class StillPolicy:
    """Stands still; useful to park the robot somewhere."""

    needs_observation = False

    def reset(self, ctx):
        pass

    def act(self, obs):
        return Action(0.0, 0.0)


class ConstantPolicy:
    needs_observation = False

    def __init__(self, v, w):
        self.v = v
        self.w = w

    def reset(self, ctx):
        pass

    def act(self, obs):
        return Action(self.v, self.w)


@pytest.fixture
def still_policy():
    return StillPolicy()


def single_ped_scenario():
    """One pedestrian walking 9 m along +x; robot parked out of range (its
    goal is elsewhere so a still robot times the episode out)."""
    return Scenario(
        id="footpath",
        bounds=(-12.0, -12.0, 12.0, 12.0),
        pedestrians=(PedSpec(start=Vec2(-4.5, -5.0), goal=Vec2(4.5, -5.0)),),
        robot_start=Vec2(11.5, 11.5),
        robot_goal=Vec2(11.5, 9.0),
        seed=0,
    )


def basic_context(dt=0.1, social_zone=2.0):
    return PolicyContext(
        dt=dt,
        v_bounds=(-0.5, 0.5),
        w_bounds=(-math.pi, math.pi),
        collision_distance=0.6,
        social_zone_radius=social_zone,
    )


def rng_stream(seed=0, stream=1):
    return RngStream(seed, stream)


def assert_records_ped_equal(a, b):
    assert sorted(a.pedestrians) == sorted(b.pedestrians)
    for pid in a.pedestrians:
        ta, tb = a.pedestrians[pid], b.pedestrians[pid]
        assert np.array_equal(ta.positions, tb.positions)
        assert np.array_equal(ta.times, tb.times)
        assert ta.goal_reached_at == tb.goal_reached_at
