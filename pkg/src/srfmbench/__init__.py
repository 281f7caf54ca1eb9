"""Deterministic crowd simulation and counterfactual navigation benchmark.

Pedestrians follow a social force model extended with a separately
parameterized robot repulsion term; robot policies are scored by the
deviation they induce in pedestrian trajectories, measured against a twin
run with the robot force disabled.
"""

__version__ = "0.1.0"

from .core import AgentState, RngStream, Trajectory, Vec2, angle_between, unit_and_norm
from .counterfactual import TwinRunResult, one_step_divergence, reward, run_twin
from .forces import (
    CLASSIC_INIT,
    DEFAULT_PARAMS,
    ForceBreakdown,
    PsiSwitches,
    SrfmParams,
    anisotropy,
    attraction_force,
    repulsion_force,
    total_force,
)
from .metrics import ade, episode_metrics, frechet, t_test_independent
from .policies import Action, Observation, build_observation, make_policy
from .scenarios import GENERATORS, Scenario, make_scenario
from .sim import EpisodeRecord, SimConfig, Simulation, run_episode, step_robot

__all__ = [
    "AgentState", "RngStream", "Trajectory", "Vec2", "angle_between",
    "unit_and_norm", "TwinRunResult", "one_step_divergence", "reward",
    "run_twin", "CLASSIC_INIT", "DEFAULT_PARAMS", "ForceBreakdown",
    "PsiSwitches", "SrfmParams", "anisotropy", "attraction_force",
    "repulsion_force", "total_force", "ade", "episode_metrics", "frechet",
    "t_test_independent", "Action", "Observation", "build_observation",
    "make_policy", "GENERATORS", "Scenario", "make_scenario",
    "EpisodeRecord", "SimConfig", "Simulation", "run_episode", "step_robot",
]
