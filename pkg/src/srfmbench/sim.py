"""Fixed-step episode engine.

Pedestrians integrate the social forces with semi-implicit Euler; the robot
follows unicycle kinematics under a navigation policy.  Update order within
a step: robot first, then all pedestrians synchronously from the pre-step
snapshot.  Identical inputs (scenario, policy, config, rng) produce
bit-identical records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .core import AgentState, RngStream, Trajectory, Vec2
from .forces import NEIGHBOR_CUTOFF, PsiSwitches, SrfmParams
from .policies import Action, Observation, Policy, PolicyContext, build_observation
from .scenarios import Scenario, sample_goal

RECORD_SCHEMA_VERSION = 1

#: Agent id of the robot in every record and force computation.
ROBOT_ID = -1


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    max_steps: int = 750
    speed_cap: float = 1.3
    goal_radius: float = 0.5
    collision_distance: float = 0.6
    social_zone_radius: float = 2.0
    divergence_zone_radius: float = 3.0
    robot_v_bounds: tuple[float, float] = (-0.5, 0.5)
    robot_w_bounds: tuple[float, float] = (-math.pi, math.pi)
    pedestrian_radius: float = 0.3
    robot_radius: float = 0.3
    params: SrfmParams = field(default_factory=SrfmParams)
    robot_force_enabled: bool = True
    reassign_goals: Optional[bool] = None  # None: follow the scenario
    psi: PsiSwitches = field(default_factory=PsiSwitches)
    neighbor_cutoff: float = NEIGHBOR_CUTOFF
    reward_success: float = 10.0
    reward_timeout: float = 5.0
    k1: float = 0.1
    k2: float = 1.0

    def __post_init__(self) -> None:
        if not (self.dt > 0.0):
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not (self.speed_cap > 0.0 and self.goal_radius > 0.0):
            raise ValueError("speed_cap and goal_radius must be positive")
        if not (self.pedestrian_radius > 0.0 and self.robot_radius > 0.0):
            raise ValueError("radii must be positive")

    def to_json_dict(self) -> dict:
        d = {
            "dt": self.dt,
            "max_steps": self.max_steps,
            "speed_cap": self.speed_cap,
            "goal_radius": self.goal_radius,
            "collision_distance": self.collision_distance,
            "social_zone_radius": self.social_zone_radius,
            "divergence_zone_radius": self.divergence_zone_radius,
            "robot_v_bounds": list(self.robot_v_bounds),
            "robot_w_bounds": list(self.robot_w_bounds),
            "pedestrian_radius": self.pedestrian_radius,
            "robot_radius": self.robot_radius,
            "params": {
                "A_p": self.params.A_p, "B_p": self.params.B_p,
                "lam": self.params.lam, "tau": self.params.tau,
                "A_r": self.params.A_r, "B_r": self.params.B_r,
                "A_o": self.params.A_o, "B_o": self.params.B_o,
            },
            "robot_force_enabled": self.robot_force_enabled,
            "reassign_goals": self.reassign_goals,
            "psi": {
                "pedestrian": self.psi.pedestrian,
                "robot": self.psi.robot,
                "obstacle": self.psi.obstacle,
            },
            "neighbor_cutoff": self.neighbor_cutoff,
            "reward_success": self.reward_success,
            "reward_timeout": self.reward_timeout,
            "k1": self.k1,
            "k2": self.k2,
        }
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "SimConfig":
        return SimConfig(
            dt=d["dt"],
            max_steps=d["max_steps"],
            speed_cap=d["speed_cap"],
            goal_radius=d["goal_radius"],
            collision_distance=d["collision_distance"],
            social_zone_radius=d["social_zone_radius"],
            divergence_zone_radius=d["divergence_zone_radius"],
            robot_v_bounds=tuple(d["robot_v_bounds"]),
            robot_w_bounds=tuple(d["robot_w_bounds"]),
            pedestrian_radius=d["pedestrian_radius"],
            robot_radius=d["robot_radius"],
            params=SrfmParams(**d["params"]),
            robot_force_enabled=d["robot_force_enabled"],
            reassign_goals=d["reassign_goals"],
            psi=PsiSwitches(**d["psi"]),
            neighbor_cutoff=d["neighbor_cutoff"],
            reward_success=d["reward_success"],
            reward_timeout=d["reward_timeout"],
            k1=d["k1"],
            k2=d["k2"],
        )


@dataclass(frozen=True)
class RobotState:
    position: Vec2
    theta: float
    velocity: Vec2
    goal: Vec2
    radius: float

    def as_agent(self) -> AgentState:
        return AgentState(
            id=ROBOT_ID,
            kind="robot",
            position=self.position,
            velocity=self.velocity,
            goal=self.goal,
            radius=self.radius,
            desired_speed=0.0,
        )


def step_robot(state: RobotState, action: Action, config: SimConfig) -> RobotState:
    """Unicycle step: rotate, then translate along the new heading.

    The action is clamped to the configured bounds before use.
    """
    v = clamp(action.v, config.robot_v_bounds[0], config.robot_v_bounds[1])
    w = clamp(action.w, config.robot_w_bounds[0], config.robot_w_bounds[1])
    theta = state.theta + w * config.dt
    c = math.cos(theta)
    s = math.sin(theta)
    return RobotState(
        position=Vec2(state.position.x + v * c * config.dt,
                      state.position.y + v * s * config.dt),
        theta=theta,
        velocity=Vec2(v * c, v * s),
        goal=state.goal,
        radius=state.radius,
    )


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # goal_reached, goal_reassigned, collision, robot_success, timeout
    agent: Optional[int] = None


TERMINAL_EVENTS = ("collision", "robot_success", "timeout")
OUTCOMES = ("success", "collision", "timeout")


class EpisodeRecord:
    """Full trace of one episode: trajectories, actions, events, outcome."""

    def __init__(
        self,
        config: SimConfig,
        scenario: Scenario,
        pedestrians: dict[int, Trajectory],
        ped_velocities: dict[int, np.ndarray],
        robot: Trajectory,
        robot_thetas: np.ndarray,
        robot_velocities: np.ndarray,
        actions: list[tuple[float, float, float]],
        events: tuple[Event, ...],
        outcome: str,
    ) -> None:
        if outcome not in OUTCOMES:
            raise ValueError(f"bad outcome {outcome!r}")
        terminal = [e for e in events if e.kind in TERMINAL_EVENTS]
        if len(terminal) != 1:
            raise ValueError("record must contain exactly one terminal event")
        self.config = config
        self.scenario = scenario
        self.pedestrians = pedestrians
        self.ped_velocities = ped_velocities
        self.robot = robot
        self.robot_thetas = robot_thetas
        self.robot_velocities = robot_velocities
        self.actions = actions
        self.events = events
        self.outcome = outcome

    @property
    def n_steps(self) -> int:
        return len(self.robot) - 1

    @property
    def end_time(self) -> float:
        return float(self.robot.times[-1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        return self.to_jsonl() == other.to_jsonl()

    def to_jsonl(self) -> str:
        ped_ids = sorted(self.pedestrians)
        lines = [json.dumps({
            "type": "header",
            "version": RECORD_SCHEMA_VERSION,
            "config": self.config.to_json_dict(),
            "scenario": self.scenario.to_json_dict(),
            "ped_ids": ped_ids,
        })]
        n_samples = len(self.robot)
        for k in range(n_samples):
            row = {
                "type": "step",
                "k": k,
                "t": float(self.robot.times[k]),
                "action": None if k == 0 else list(self.actions[k - 1][1:]),
                "robot": [
                    float(self.robot.positions[k, 0]),
                    float(self.robot.positions[k, 1]),
                    float(self.robot_thetas[k]),
                    float(self.robot_velocities[k, 0]),
                    float(self.robot_velocities[k, 1]),
                ],
                "peds": [
                    [
                        float(self.pedestrians[i].positions[k, 0]),
                        float(self.pedestrians[i].positions[k, 1]),
                        float(self.ped_velocities[i][k, 0]),
                        float(self.ped_velocities[i][k, 1]),
                    ]
                    for i in ped_ids
                ],
            }
            lines.append(json.dumps(row))
        lines.append(json.dumps({
            "type": "footer",
            "events": [[e.t, e.kind, e.agent] for e in self.events],
            "outcome": self.outcome,
            "goal_reached_at": {
                str(i): self.pedestrians[i].goal_reached_at for i in ped_ids
            },
            "robot_goal_reached_at": self.robot.goal_reached_at,
        }))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "EpisodeRecord":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not lines or lines[0].get("type") != "header":
            raise ValueError("missing record header")
        if lines[0]["version"] != RECORD_SCHEMA_VERSION:
            raise ValueError("unsupported record version")
        header = lines[0]
        footer = lines[-1]
        if footer.get("type") != "footer":
            raise ValueError("missing record footer")
        steps = lines[1:-1]
        ped_ids = header["ped_ids"]
        n = len(steps)
        times = np.array([s["t"] for s in steps], dtype=float)
        robot_pos = np.array([s["robot"][:2] for s in steps], dtype=float)
        robot_thetas = np.array([s["robot"][2] for s in steps], dtype=float)
        robot_vel = np.array([s["robot"][3:5] for s in steps], dtype=float)
        # action timestamps are the decision times (previous sample)
        actions = [
            (float(times[k - 1]), float(steps[k]["action"][0]),
             float(steps[k]["action"][1]))
            for k in range(1, n)
        ]
        goal_reached = footer["goal_reached_at"]
        peds = {}
        ped_vels = {}
        for idx, pid in enumerate(ped_ids):
            pos = np.array([s["peds"][idx][:2] for s in steps], dtype=float)
            vel = np.array([s["peds"][idx][2:4] for s in steps], dtype=float)
            peds[pid] = Trajectory(pid, times, pos, goal_reached[str(pid)])
            ped_vels[pid] = vel
        config = SimConfig.from_json_dict(header["config"])
        scenario = Scenario.from_json_dict(header["scenario"])
        events = tuple(Event(t=e[0], kind=e[1], agent=e[2]) for e in footer["events"])
        robot = Trajectory(ROBOT_ID, times, robot_pos,
                           footer.get("robot_goal_reached_at"))
        return EpisodeRecord(config, scenario, peds, ped_vels, robot,
                             robot_thetas, robot_vel, actions, events,
                             footer["outcome"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @staticmethod
    def load(path: str | Path) -> "EpisodeRecord":
        return EpisodeRecord.from_jsonl(Path(path).read_text())


class Simulation:
    """Incremental simulation state: one call to `step` per control period.

    Drives everything `run_episode` needs while remaining steppable from the
    outside (the wire-protocol server advances it action by action).
    """

    def __init__(
        self,
        scenario: Scenario,
        config: SimConfig,
        rng: RngStream,
        terminal_checks: bool = True,
        step_limit: Optional[int] = None,
    ) -> None:
        self.scenario = scenario
        self.config = config
        self.rng = rng
        self.terminal_checks = terminal_checks
        self.step_limit = config.max_steps if step_limit is None else step_limit
        self.reassign = (
            scenario.reassign_goals
            if config.reassign_goals is None
            else config.reassign_goals
        )

        n = scenario.n_pedestrians
        self.n = n
        self.ids = np.arange(n, dtype=np.longlong)
        self.pos = np.array(
            [[p.start.x, p.start.y] for p in scenario.pedestrians], dtype=float
        ).reshape(n, 2)
        self.vel = np.zeros((n, 2), dtype=float)
        self.goal = np.array(
            [[p.goal.x, p.goal.y] for p in scenario.pedestrians], dtype=float
        ).reshape(n, 2)
        self.desired_speed = np.array(
            [p.desired_speed for p in scenario.pedestrians], dtype=float
        )
        self.radius = np.full(n, config.pedestrian_radius, dtype=float)
        self.obstacles = np.array(
            [[c.x, c.y, r] for c, r in scenario.obstacles], dtype=float
        ).reshape(len(scenario.obstacles), 3)

        self.robot = RobotState(
            position=scenario.robot_start,
            theta=scenario.initial_robot_theta(),
            velocity=Vec2(0.0, 0.0),
            goal=scenario.robot_goal,
            radius=config.robot_radius,
        )

        cap = self.step_limit + 1
        self._hist_pos = np.empty((cap, n, 2), dtype=float)
        self._hist_vel = np.empty((cap, n, 2), dtype=float)
        self._hist_robot = np.empty((cap, 5), dtype=float)
        self._hist_pos[0] = self.pos
        self._hist_vel[0] = self.vel
        self._hist_robot[0] = (
            self.robot.position.x, self.robot.position.y, self.robot.theta,
            0.0, 0.0,
        )

        self.k = 0
        self.actions: list[tuple[float, float, float]] = []
        self.events: list[Event] = []
        self.outcome: Optional[str] = None
        self.goal_reached_at: list[Optional[float]] = [None] * n
        self.robot_reached_at: Optional[float] = None

        gd0 = self._goal_distances()
        self._armed = [bool(gd0[i] > config.goal_radius) for i in range(n)]
        self.start_goal_dist = (scenario.robot_start - scenario.robot_goal).norm()

        self._goal_gens = None
        if self.reassign:
            self._goal_gens = [rng.child(int(i)).generator() for i in self.ids]

        # Degenerate terminal states at t = 0 (robot spawned at its goal or
        # on top of a pedestrian).
        if terminal_checks:
            self._check_terminal(initial=True)
        elif self.step_limit == 0:
            self._finish_replay()

    # -- public state ------------------------------------------------------

    @property
    def t(self) -> float:
        return self.k * self.config.dt

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def ped_agent_states(self) -> list[AgentState]:
        out = []
        for i in range(self.n):
            out.append(AgentState(
                id=int(self.ids[i]),
                kind="pedestrian",
                position=Vec2(self.pos[i, 0], self.pos[i, 1]),
                velocity=Vec2(self.vel[i, 0], self.vel[i, 1]),
                goal=Vec2(self.goal[i, 0], self.goal[i, 1]),
                radius=float(self.radius[i]),
                desired_speed=float(self.desired_speed[i]),
            ))
        return out

    def observation(self, last_action: Action,
                    success: bool = False, terminated: bool = False) -> Observation:
        return build_observation(
            robot_position=self.robot.position,
            robot_theta=self.robot.theta,
            ped_positions=self.pos,
            goal=self.robot.goal,
            last_action=last_action,
            success=success,
            terminated=terminated,
            social_zone_radius=self.config.social_zone_radius,
        )

    def policy_context(self, episode_id: int = 0,
                       policy_defaults: Optional[dict] = None) -> PolicyContext:
        return PolicyContext(
            dt=self.config.dt,
            v_bounds=self.config.robot_v_bounds,
            w_bounds=self.config.robot_w_bounds,
            collision_distance=self.config.collision_distance,
            social_zone_radius=self.config.social_zone_radius,
            scenario_id=self.scenario.id,
            seed=self.scenario.seed,
            episode_id=episode_id,
            defaults=policy_defaults,
        )

    # -- stepping ----------------------------------------------------------

    def step(self, action: Action) -> bool:
        """Advance one control period; returns True when the episode ended."""
        if self.done:
            raise RuntimeError("episode already finished")
        cfg = self.config

        self.actions.append((self.t, action.v, action.w))
        self.robot = step_robot(self.robot, action, cfg)

        out_pos = self._hist_pos[self.k + 1]
        out_vel = self._hist_vel[self.k + 1]
        kernels.step_pedestrians_arrays(
            self.pos, self.vel, self.goal, self.desired_speed, self.radius,
            self.ids,
            bool(cfg.robot_force_enabled),
            self.robot.position.x, self.robot.position.y,
            self.robot.radius, ROBOT_ID,
            self.obstacles,
            cfg.params, cfg.psi,
            cfg.dt, cfg.speed_cap, cfg.goal_radius, cfg.neighbor_cutoff,
            out_pos, out_vel,
        )
        self.pos = out_pos
        self.vel = out_vel
        self.k += 1
        self._hist_robot[self.k] = (
            self.robot.position.x, self.robot.position.y, self.robot.theta,
            self.robot.velocity.x, self.robot.velocity.y,
        )

        self._process_arrivals()
        self._check_terminal()
        return self.done

    def _goal_distances(self) -> np.ndarray:
        d = self.goal - self.pos
        return np.hypot(d[:, 0], d[:, 1])

    def _process_arrivals(self) -> None:
        cfg = self.config
        gd = self._goal_distances()
        t = self.t
        for i in range(self.n):
            inside = bool(gd[i] <= cfg.goal_radius)
            if not inside:
                self._armed[i] = True
                continue
            if not self._armed[i]:
                continue
            self._armed[i] = False
            if self.goal_reached_at[i] is None:
                self.goal_reached_at[i] = t
                self.events.append(Event(t, "goal_reached", int(self.ids[i])))
            if self.reassign:
                new_goal = sample_goal(
                    self._goal_gens[i],
                    self.scenario.bounds,
                    Vec2(self.pos[i, 0], self.pos[i, 1]),
                    self.scenario.robot_goal,
                )
                self.goal[i, 0] = new_goal.x
                self.goal[i, 1] = new_goal.y
                self.events.append(Event(t, "goal_reassigned", int(self.ids[i])))
                self._armed[i] = True

    def min_robot_distance(self) -> float:
        if self.n == 0:
            return math.inf
        d = self.pos - np.array([self.robot.position.x, self.robot.position.y])
        return float(np.min(np.hypot(d[:, 0], d[:, 1])))

    def robot_goal_distance(self) -> float:
        return (self.robot.position - self.robot.goal).norm()

    def _check_terminal(self, initial: bool = False) -> None:
        t = self.t
        at_goal = self.robot_goal_distance() <= self.config.goal_radius
        if at_goal and self.robot_reached_at is None:
            self.robot_reached_at = t
        if not self.terminal_checks:
            if self.k >= self.step_limit:
                self._finish_replay()
            return
        if self.min_robot_distance() < self.config.collision_distance:
            self.events.append(Event(t, "collision"))
            self.outcome = "collision"
        elif at_goal:
            self.events.append(Event(t, "robot_success"))
            self.outcome = "success"
        elif not initial and self.k >= self.step_limit:
            self.events.append(Event(t, "timeout"))
            self.outcome = "timeout"

    def _finish_replay(self) -> None:
        # Replay terminates exactly at log exhaustion; collisions are not
        # meaningful when the robot exerts no force (pedestrians may walk
        # through its replayed path).
        t = self.t
        if self.robot_reached_at is not None:
            self.events.append(Event(t, "robot_success"))
            self.outcome = "success"
        else:
            self.events.append(Event(t, "timeout"))
            self.outcome = "timeout"

    # -- record assembly ---------------------------------------------------

    def build_record(self) -> EpisodeRecord:
        if not self.done:
            raise RuntimeError("episode still running")
        cfg = self.config
        n_samples = self.k + 1
        times = np.arange(n_samples, dtype=float) * cfg.dt
        peds = {}
        ped_vels = {}
        for i in range(self.n):
            pid = int(self.ids[i])
            peds[pid] = Trajectory(
                pid, times, self._hist_pos[:n_samples, i].copy(),
                self.goal_reached_at[i],
            )
            ped_vels[pid] = self._hist_vel[:n_samples, i].copy()
        robot = Trajectory(
            ROBOT_ID, times, self._hist_robot[:n_samples, 0:2].copy(),
            self.robot_reached_at,
        )
        return EpisodeRecord(
            config=cfg,
            scenario=self.scenario,
            pedestrians=peds,
            ped_velocities=ped_vels,
            robot=robot,
            robot_thetas=self._hist_robot[:n_samples, 2].copy(),
            robot_velocities=self._hist_robot[:n_samples, 3:5].copy(),
            actions=list(self.actions),
            events=tuple(self.events),
            outcome=self.outcome,
        )

    def reward_components(self, k1: Optional[float] = None,
                          k2: Optional[float] = None) -> tuple[float, dict]:
        """Reward for the state reached by the last step (see counterfactual)."""
        from . import counterfactual  # runtime import: counterfactual imports sim

        return counterfactual.step_reward(self, k1=k1, k2=k2)


class ReplayPolicy:
    """Feeds back a recorded action log; used by the counterfactual run."""

    needs_observation = False

    def __init__(self, actions: Sequence[tuple[float, float, float]]) -> None:
        self._actions = list(actions)
        self._i = 0

    def reset(self, ctx: PolicyContext) -> None:
        self._i = 0

    def act(self, obs: Optional[Observation]) -> Action:
        if self._i >= len(self._actions):
            raise RuntimeError("replay log exhausted")
        _, v, w = self._actions[self._i]
        self._i += 1
        return Action(v, w)


def run_episode(
    scenario: Scenario,
    policy: Policy,
    config: SimConfig,
    rng: RngStream,
    episode_id: int = 0,
    policy_defaults: Optional[dict] = None,
) -> EpisodeRecord:
    """Run one policy-driven episode to termination."""
    sim = Simulation(scenario, config, rng)
    policy.reset(sim.policy_context(episode_id, policy_defaults))
    wants_rewards = getattr(policy, "wants_rewards", False)
    last_action = Action(0.0, 0.0)
    reward_components = {"r_term": 0.0, "r_dist": 0.0, "r_div": 0.0}
    while not sim.done:
        obs = None
        if getattr(policy, "needs_observation", True):
            obs = sim.observation(last_action)
        if wants_rewards:
            action = policy.act(obs, reward_components=reward_components, done=False)
        else:
            action = policy.act(obs)
        sim.step(action)
        if wants_rewards:
            _, reward_components = sim.reward_components()
        last_action = action
    return sim.build_record()


def replay_episode(
    scenario: Scenario,
    actions: Sequence[tuple[float, float, float]],
    config: SimConfig,
    rng: RngStream,
) -> EpisodeRecord:
    """Re-run a scenario with the robot driven by a recorded action log.

    Terminal checks are disabled: the run covers exactly the logged steps,
    keeping both twin records on the same time grid.
    """
    sim = Simulation(scenario, config, rng, terminal_checks=False,
                     step_limit=len(actions))
    policy = ReplayPolicy(actions)
    policy.reset(sim.policy_context())
    while not sim.done:
        sim.step(policy.act(None))
    return sim.build_record()
