"""Twin-run engine: paired with/without-robot-force trajectories, the
one-step divergence used by the reward, and the reward itself.

The counterfactual run replays the factual robot action log with the robot
force disabled: the scene is otherwise identical, so the difference between
the paired pedestrian trajectories isolates the robot's influence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import AgentState, RngStream, Trajectory, Vec2
from .forces import NEIGHBOR_CUTOFF, PsiSwitches, SrfmParams, total_force
from .sim import EpisodeRecord, SimConfig, Simulation, replay_episode, run_episode
from .scenarios import Scenario


@dataclass(frozen=True)
class TwinRunResult:
    factual: EpisodeRecord
    counterfactual: EpisodeRecord
    pairing: tuple[tuple[int, Trajectory, Trajectory], ...]

    def __post_init__(self) -> None:
        if not np.array_equal(self.factual.robot.positions,
                              self.counterfactual.robot.positions):
            raise ValueError("twin runs must share the robot path")
        fact_ids = set(self.factual.pedestrians)
        if {pid for pid, _, _ in self.pairing} != fact_ids:
            raise ValueError("pairing must cover every pedestrian exactly once")


def run_twin(
    scenario: Scenario,
    policy,
    config: SimConfig,
    rng: RngStream,
    mode: str = "replay",
    episode_id: int = 0,
    policy_defaults: Optional[dict] = None,
) -> TwinRunResult:
    """Factual run (robot force on) plus counterfactual replay (force off).

    Restricted to fixed-goal scenarios: under goal reassignment the
    per-pedestrian pairing is ill-defined (different arrival times would
    draw different goals).  `mode` accepts "replay" and "remove"; in this
    engine the robot influences pedestrians only through its force term, so
    removing the robot and replaying it force-free yield identical
    pedestrian trajectories, and both modes run the same computation.
    """
    if mode not in ("replay", "remove"):
        raise ValueError(f"unknown counterfactual mode {mode!r}")
    reassign = (scenario.reassign_goals if config.reassign_goals is None
                else config.reassign_goals)
    if reassign:
        raise ValueError("twin runs require fixed-goal scenarios "
                         "(reassign_goals must be off)")
    factual = run_episode(scenario, policy,
                          replace(config, robot_force_enabled=True), rng,
                          episode_id=episode_id, policy_defaults=policy_defaults)
    counter = replay_episode(scenario, factual.actions,
                             replace(config, robot_force_enabled=False), rng)
    pairing = tuple(
        (pid, factual.pedestrians[pid], counter.pedestrians[pid])
        for pid in sorted(factual.pedestrians)
    )
    return TwinRunResult(factual=factual, counterfactual=counter, pairing=pairing)


def save_twin(twin: TwinRunResult, factual_path, counterfactual_path,
              manifest_path) -> None:
    """Two record files plus a pairing manifest."""
    import json
    from pathlib import Path

    twin.factual.save(factual_path)
    twin.counterfactual.save(counterfactual_path)
    manifest = {
        "factual": str(factual_path),
        "counterfactual": str(counterfactual_path),
        "scenario_id": twin.factual.scenario.id,
        "seed": twin.factual.scenario.seed,
        "pairs": [[pid, pid] for pid, _, _ in twin.pairing],
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n")


def one_step_divergence(
    ped_state: AgentState,
    all_states: Sequence[AgentState],
    robot_state: Optional[AgentState],
    params: SrfmParams,
    dt: float,
    obstacles: Sequence[tuple[Vec2, float]] = (),
    psi: PsiSwitches = PsiSwitches(),
    neighbor_cutoff: float = NEIGHBOR_CUTOFF,
    speed_cap: Optional[float] = None,
) -> float:
    """Distance between the pedestrian's next position predicted with and
    without the robot force (one semi-implicit Euler step each).

    Without speed-cap clamping this equals |robot force| * dt^2.
    """
    positions = []
    for enabled in (True, False):
        fb = total_force(ped_state, all_states, robot_state, obstacles, params,
                         robot_force_enabled=enabled, psi=psi,
                         neighbor_cutoff=neighbor_cutoff)
        vx = ped_state.velocity.x + fb.total.x * dt
        vy = ped_state.velocity.y + fb.total.y * dt
        if speed_cap is not None:
            sp = math.sqrt(vx * vx + vy * vy)
            if sp > speed_cap:
                s = speed_cap / sp
                vx *= s
                vy *= s
        positions.append((ped_state.position.x + vx * dt,
                          ped_state.position.y + vy * dt))
    (x1, y1), (x2, y2) = positions
    return math.hypot(x1 - x2, y1 - y2)


@dataclass(frozen=True)
class RewardContext:
    """Inputs to the reward at one step."""

    terminal: Optional[str]  # None, "success", "collision", or "timeout"
    goal_dist: float
    start_goal_dist: float
    divergence: float  # summed one-step divergence of nearby pedestrians


def reward(
    ctx: RewardContext,
    config: SimConfig,
    k1: Optional[float] = None,
    k2: Optional[float] = None,
) -> tuple[float, dict]:
    """r_total = r_term - k1 * r_dist - k2 * r_div.

    r_term: +reward_success on success, -reward_timeout on timeout, doubled
    for collisions, 0 mid-episode.  r_dist: goal distance normalized by the
    episode-start distance, clamped to [0, 1].  r_div: summed divergence.
    """
    k1 = config.k1 if k1 is None else k1
    k2 = config.k2 if k2 is None else k2
    if ctx.terminal == "success":
        r_term = config.reward_success
    elif ctx.terminal == "collision":
        r_term = -2.0 * config.reward_timeout
    elif ctx.terminal == "timeout":
        r_term = -config.reward_timeout
    else:
        r_term = 0.0
    if ctx.start_goal_dist > 0.0:
        r_dist = min(max(ctx.goal_dist / ctx.start_goal_dist, 0.0), 1.0)
    else:
        r_dist = 0.0
    r_div = ctx.divergence
    total = r_term - k1 * r_dist - k2 * r_div
    return total, {"r_term": r_term, "r_dist": r_dist, "r_div": r_div}


def step_reward(sim: Simulation, k1: Optional[float] = None,
                k2: Optional[float] = None) -> tuple[float, dict]:
    """Reward for the simulation's current (post-step) state."""
    cfg = sim.config
    states = sim.ped_agent_states()
    robot_agent = sim.robot.as_agent()
    div = 0.0
    for s in states:
        d = (s.position - robot_agent.position).norm()
        if d > cfg.divergence_zone_radius:
            continue
        div += one_step_divergence(
            s, states, robot_agent, cfg.params, cfg.dt,
            obstacles=sim.scenario.obstacles, psi=cfg.psi,
            neighbor_cutoff=cfg.neighbor_cutoff, speed_cap=cfg.speed_cap,
        )
    ctx = RewardContext(
        terminal={"success": "success", "collision": "collision",
                  "timeout": "timeout"}.get(sim.outcome),
        goal_dist=sim.robot_goal_distance(),
        start_goal_dist=sim.start_goal_dist,
        divergence=div,
    )
    return reward(ctx, cfg, k1=k1, k2=k2)
