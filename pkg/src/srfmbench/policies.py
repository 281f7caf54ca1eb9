"""Robot navigation policies behind one uniform contract.

Policies see only the Observation (distances and angles in the robot body
frame, counter-clockwise positive, heading = 0).  DWA and VO therefore keep
a small cache: a dead-reckoned odometry pose integrated from their own
commands, and the previous pedestrian positions for finite-difference
velocity estimates.  Tunables live in data/policy_defaults.json, not in
code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import Vec2
from .protocol import (
    DEFAULT_TIMEOUT,
    PROTOCOL_VERSION,
    MessageStream,
    PolicyTransportError,
    ProtocolError,
)

#: Fixed number of pedestrian slots in every observation.
N_SLOTS = 10

#: Flat observation length: goal (2) + slots (10 x 3) + last action (2)
#: + success/terminated flags (2).
OBS_LEN = 2 + 3 * N_SLOTS + 2 + 2

#: Action bounds enforced at construction (m/s, rad/s).
V_LIMIT = 0.5
W_LIMIT = math.pi


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Action:
    v: float
    w: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", _clamp(float(self.v), -V_LIMIT, V_LIMIT))
        object.__setattr__(self, "w", _clamp(float(self.w), -W_LIMIT, W_LIMIT))


@dataclass(frozen=True)
class Slot:
    dist: float = 0.0
    angle: float = 0.0
    valid: bool = False


@dataclass(frozen=True)
class Observation:
    goal_dist: float
    goal_angle: float
    slots: tuple[Slot, ...]
    last_action: tuple[float, float]
    success: bool = False
    terminated: bool = False

    def to_vector(self) -> list[float]:
        out = [self.goal_dist, self.goal_angle]
        for s in self.slots:
            out.extend((s.dist, s.angle, 1.0 if s.valid else 0.0))
        out.extend(self.last_action)
        out.append(1.0 if self.success else 0.0)
        out.append(1.0 if self.terminated else 0.0)
        return out

    @staticmethod
    def from_vector(vec: Sequence[float]) -> "Observation":
        if len(vec) != OBS_LEN:
            raise ValueError(f"observation vector must have length {OBS_LEN}")
        slots = tuple(
            Slot(vec[2 + 3 * i], vec[3 + 3 * i], vec[4 + 3 * i] != 0.0)
            for i in range(N_SLOTS)
        )
        base = 2 + 3 * N_SLOTS
        return Observation(
            goal_dist=vec[0],
            goal_angle=vec[1],
            slots=slots,
            last_action=(vec[base], vec[base + 1]),
            success=vec[base + 2] != 0.0,
            terminated=vec[base + 3] != 0.0,
        )


def build_observation(
    robot_position: Vec2,
    robot_theta: float,
    ped_positions: np.ndarray,
    goal: Vec2,
    last_action: Action,
    success: bool = False,
    terminated: bool = False,
    social_zone_radius: float = 2.0,
) -> Observation:
    """Body-frame observation: goal polar coordinates plus the N_SLOTS
    nearest pedestrians inside the social zone, nearest first, zero-padded.

    Distance ties are broken by array index (ascending agent id)."""
    gdx = goal.x - robot_position.x
    gdy = goal.y - robot_position.y
    goal_dist = math.sqrt(gdx * gdx + gdy * gdy)
    goal_angle = wrap_angle(math.atan2(gdy, gdx) - robot_theta) if goal_dist > 0 else 0.0

    slots: list[Slot] = []
    if ped_positions.shape[0]:
        rel = ped_positions - np.array([robot_position.x, robot_position.y])
        dists = np.hypot(rel[:, 0], rel[:, 1])
        inside = np.flatnonzero(dists <= social_zone_radius)
        order = inside[np.argsort(dists[inside], kind="stable")][:N_SLOTS]
        for idx in order:
            ang = wrap_angle(math.atan2(rel[idx, 1], rel[idx, 0]) - robot_theta)
            slots.append(Slot(float(dists[idx]), ang, True))
    while len(slots) < N_SLOTS:
        slots.append(Slot())
    return Observation(
        goal_dist=goal_dist,
        goal_angle=goal_angle,
        slots=tuple(slots),
        last_action=(last_action.v, last_action.w),
        success=success,
        terminated=terminated,
    )


@dataclass(frozen=True)
class PolicyContext:
    dt: float
    v_bounds: tuple[float, float]
    w_bounds: tuple[float, float]
    collision_distance: float
    social_zone_radius: float
    scenario_id: str = ""
    seed: int = 0
    episode_id: int = 0
    defaults: Optional[dict] = None


@runtime_checkable
class Policy(Protocol):
    def reset(self, ctx: PolicyContext) -> None: ...

    def act(self, obs: Optional[Observation]) -> Action: ...


def load_policy_defaults() -> dict:
    """Committed tunables for the built-in planners."""
    text = resources.files("srfmbench").joinpath("data/policy_defaults.json").read_text()
    return json.loads(text)


def _defaults_for(ctx: PolicyContext, name: str) -> dict:
    table = ctx.defaults if ctx.defaults is not None else load_policy_defaults()
    return dict(table.get(name, {}))


class _Odometry:
    """Dead-reckoned pose in the episode-start frame, plus pedestrian
    tracking by nearest-neighbor slot association."""

    def __init__(self, dt: float, match_radius: float) -> None:
        self.dt = dt
        self.match_radius = match_radius
        self.x = 0.0
        self.y = 0.0
        self.theta = 0.0
        self.prev_peds: list[tuple[float, float]] = []

    def ped_world(self, obs: Observation) -> list[tuple[float, float]]:
        out = []
        for s in obs.slots:
            if not s.valid:
                continue
            ang = self.theta + s.angle
            out.append((self.x + s.dist * math.cos(ang),
                        self.y + s.dist * math.sin(ang)))
        return out

    def goal_world(self, obs: Observation) -> tuple[float, float]:
        ang = self.theta + obs.goal_angle
        return (self.x + obs.goal_dist * math.cos(ang),
                self.y + obs.goal_dist * math.sin(ang))

    def track(self, peds: list[tuple[float, float]]) -> list[tuple[float, float]]:
        """Velocity estimates by greedy nearest-neighbor matching against the
        previous step; unmatched pedestrians count as static."""
        vels = [(0.0, 0.0)] * len(peds)
        if self.prev_peds and peds:
            pairs = []
            for i, p in enumerate(peds):
                for j, q in enumerate(self.prev_peds):
                    d = math.hypot(p[0] - q[0], p[1] - q[1])
                    if d <= self.match_radius:
                        pairs.append((d, i, j))
            pairs.sort()
            used_i: set[int] = set()
            used_j: set[int] = set()
            for d, i, j in pairs:
                if i in used_i or j in used_j:
                    continue
                used_i.add(i)
                used_j.add(j)
                q = self.prev_peds[j]
                vels[i] = ((peds[i][0] - q[0]) / self.dt,
                           (peds[i][1] - q[1]) / self.dt)
        self.prev_peds = list(peds)
        return vels

    def advance(self, action: Action) -> None:
        self.theta = self.theta + action.w * self.dt
        self.x = self.x + action.v * math.cos(self.theta) * self.dt
        self.y = self.y + action.v * math.sin(self.theta) * self.dt


class GoalSeekPolicy:
    """Pure goal pursuit; ignores pedestrians (sanity baseline)."""

    def __init__(self) -> None:
        self._turn_gain = 2.0
        self._v_max = V_LIMIT
        self._w_bounds = (-W_LIMIT, W_LIMIT)

    def reset(self, ctx: PolicyContext) -> None:
        self._turn_gain = _defaults_for(ctx, "goal_seek").get("turn_gain", 2.0)
        self._v_max = ctx.v_bounds[1]
        self._w_bounds = ctx.w_bounds

    def act(self, obs: Observation) -> Action:
        w = _clamp(self._turn_gain * obs.goal_angle,
                   self._w_bounds[0], self._w_bounds[1])
        v = self._v_max * max(0.0, math.cos(obs.goal_angle))
        return Action(v, w)


class DwaPolicy:
    """Dynamic-window sampling planner.

    Samples reachable (v, w) pairs, rolls each out over a short horizon
    against constant-velocity pedestrian extrapolations, discards rollouts
    that pass within collision distance, and scores the rest on heading,
    clearance, and speed.  Deterministic: ties resolve to the first sample
    in (v, w) grid order.
    """

    def __init__(self) -> None:
        self._cfg: dict = {}
        self._ctx: Optional[PolicyContext] = None
        self._odom: Optional[_Odometry] = None
        self._last = (0.0, 0.0)

    def reset(self, ctx: PolicyContext) -> None:
        self._cfg = _defaults_for(ctx, "dwa")
        self._ctx = ctx
        self._odom = _Odometry(ctx.dt, self._cfg.get("match_radius", 0.5))
        self._last = (0.0, 0.0)

    def act(self, obs: Observation) -> Action:
        ctx = self._ctx
        cfg = self._cfg
        odom = self._odom
        dt = ctx.dt

        peds = odom.ped_world(obs)
        vels = odom.track(peds)
        gx, gy = odom.goal_world(obs)

        av = cfg.get("accel_v", 1.0)
        aw = cfg.get("accel_w", 2.0 * math.pi)
        v0, w0 = self._last
        v_lo = max(ctx.v_bounds[0], v0 - av * dt)
        v_hi = min(ctx.v_bounds[1], v0 + av * dt)
        w_lo = max(ctx.w_bounds[0], w0 - aw * dt)
        w_hi = min(ctx.w_bounds[1], w0 + aw * dt)
        vs = np.linspace(v_lo, v_hi, int(cfg.get("n_v", 7)))
        ws = np.linspace(w_lo, w_hi, int(cfg.get("n_w", 15)))
        vv, ww = np.meshgrid(vs, ws, indexing="ij")
        vv = vv.ravel()
        ww = ww.ravel()

        horizon = max(1, int(round(cfg.get("horizon_s", 1.0) / dt)))
        steps = np.arange(1, horizon + 1, dtype=float) * dt
        ang = self._odom.theta + ww[:, None] * steps[None, :]
        px = odom.x + np.cumsum(vv[:, None] * np.cos(ang) * dt, axis=1)
        py = odom.y + np.cumsum(vv[:, None] * np.sin(ang) * dt, axis=1)

        if peds:
            ped_arr = np.array(peds)
            vel_arr = np.array(vels)
            # predicted pedestrian positions: (n_ped, horizon)
            qx = ped_arr[:, 0][:, None] + vel_arr[:, 0][:, None] * steps[None, :]
            qy = ped_arr[:, 1][:, None] + vel_arr[:, 1][:, None] * steps[None, :]
            dx = px[:, None, :] - qx[None, :, :]
            dy = py[:, None, :] - qy[None, :, :]
            clearance = np.sqrt(dx * dx + dy * dy).min(axis=(1, 2))
        else:
            clearance = np.full(vv.shape[0], np.inf)

        admissible = clearance > ctx.collision_distance + cfg.get("safety_margin", 0.2)
        if not np.any(admissible):
            w_max = self._ctx.w_bounds[1]
            action = Action(0.0, w_max * _sign(obs.goal_angle))
            self._commit(action)
            return action

        end_theta = self._odom.theta + ww * horizon * dt
        err = np.arctan2(gy - py[:, -1], gx - px[:, -1]) - end_theta
        err = np.arctan2(np.sin(err), np.cos(err))
        heading_score = (math.pi - np.abs(err)) / math.pi
        sat = cfg.get("clearance_sat", 2.0)
        clearance_score = np.minimum(clearance, sat) / sat
        v_span = ctx.v_bounds[1] if ctx.v_bounds[1] > 0 else 1.0
        velocity_score = vv / v_span
        score = (cfg.get("w_heading", 0.8) * heading_score
                 + cfg.get("w_clearance", 0.2) * clearance_score
                 + cfg.get("w_velocity", 0.2) * velocity_score)
        score = np.where(admissible, score, -np.inf)
        best = int(np.argmax(score))
        action = Action(float(vv[best]), float(ww[best]))
        self._commit(action)
        return action

    def _commit(self, action: Action) -> None:
        self._odom.advance(action)
        self._last = (action.v, action.w)


def in_velocity_obstacle(
    u: tuple[float, float],
    p_rel: tuple[float, float],
    v_obstacle: tuple[float, float],
    r_combined: float,
    horizon: float,
) -> bool:
    """True if planar velocity u collides with the obstacle within the
    horizon (relative position p_rel evolves as p_rel - (u - v_obstacle) t)."""
    wx = u[0] - v_obstacle[0]
    wy = u[1] - v_obstacle[1]
    px, py = p_rel
    dist2 = px * px + py * py
    r2 = r_combined * r_combined
    if dist2 <= r2:
        # already overlapping: colliding unless strictly separating
        # (d|p_rel|^2/dt = -2 p_rel.w, so separation needs p_rel.w < 0)
        return wx * px + wy * py >= 0.0
    a = wx * wx + wy * wy
    if a == 0.0:
        return False
    b = px * wx + py * wy  # half of -d|p|^2/dt
    if b <= 0.0:
        return False  # moving away
    disc = b * b - a * (dist2 - r2)
    if disc <= 0.0:
        return False
    t_hit = (b - math.sqrt(disc)) / a
    return 0.0 <= t_hit <= horizon


class VoPolicy:
    """Velocity-obstacle planner.

    Builds collision cones from pedestrians within the detection range
    (velocities finite-differenced from tracked slot positions), picks the
    admissible planar velocity closest to the goal-directed preference, and
    converts it to (v, w) under the unicycle constraint.  Stops when no
    admissible velocity exists.
    """

    def __init__(self, detection_range: Optional[float] = None) -> None:
        self._detection_range = detection_range
        self._cfg: dict = {}
        self._ctx: Optional[PolicyContext] = None
        self._odom: Optional[_Odometry] = None
        self.last_planar_velocity = (0.0, 0.0)
        self.last_threats: list[tuple[tuple[float, float],
                                      tuple[float, float]]] = []

    def reset(self, ctx: PolicyContext) -> None:
        self._cfg = _defaults_for(ctx, "vo")
        if self._detection_range is None:
            self._detection_range = self._cfg.get("detection_range", 1.4)
        if not (self._detection_range > 0.0):
            raise ValueError("detection_range must be positive")
        self._ctx = ctx
        self._odom = _Odometry(ctx.dt, self._cfg.get("match_radius", 0.5))

    def act(self, obs: Observation) -> Action:
        ctx = self._ctx
        cfg = self._cfg
        odom = self._odom

        peds_all = odom.ped_world(obs)
        vels_all = odom.track(peds_all)
        # the tracker sees everything in the zone; the planner only reacts to
        # pedestrians inside the detection range
        tracked = []
        valid_dists = [s.dist for s in obs.slots if s.valid]
        for k, (p, vel) in enumerate(zip(peds_all, vels_all)):
            if valid_dists[k] <= self._detection_range:
                tracked.append((p, vel))
        gx, gy = odom.goal_world(obs)

        v_max = ctx.v_bounds[1]
        dx = gx - odom.x
        dy = gy - odom.y
        gd = math.hypot(dx, dy)
        if gd > 1e-12:
            pref = (v_max * dx / gd, v_max * dy / gd)
        else:
            pref = (0.0, 0.0)
        self.last_preferred = pref

        horizon = cfg.get("horizon_s", 4.0)
        r_comb = ctx.collision_distance + cfg.get("safety_margin", 0.4)
        candidates = [(0.0, 0.0)]
        n_speeds = int(cfg.get("n_speeds", 4))
        n_dirs = int(cfg.get("n_dirs", 24))
        for si in range(1, n_speeds + 1):
            speed = v_max * si / n_speeds
            for di in range(n_dirs):
                ang = 2.0 * math.pi * di / n_dirs
                candidates.append((speed * math.cos(ang), speed * math.sin(ang)))

        threats = [((p[0] - odom.x, p[1] - odom.y), vel) for p, vel in tracked]
        self.last_threats = threats
        best_u = None
        best_cost = math.inf
        for u in candidates:
            blocked = False
            for p_rel, vel in threats:
                if in_velocity_obstacle(u, p_rel, vel, r_comb, horizon):
                    blocked = True
                    break
            if blocked:
                continue
            cost = (u[0] - pref[0]) ** 2 + (u[1] - pref[1]) ** 2
            if cost < best_cost:
                best_cost = cost
                best_u = u

        if best_u is None:
            best_u = (0.0, 0.0)
        self.last_planar_velocity = best_u

        speed = math.hypot(best_u[0], best_u[1])
        if speed < 1e-12:
            action = Action(0.0, 0.0)
        else:
            err = wrap_angle(math.atan2(best_u[1], best_u[0]) - odom.theta)
            w = _clamp(cfg.get("turn_gain", 2.0) * err,
                       ctx.w_bounds[0], ctx.w_bounds[1])
            v = speed * max(0.0, math.cos(err))
            action = Action(v, w)
        odom.advance(action)
        return action


class ExternalPolicy:
    """Adapter speaking the wire protocol to a policy server.

    Endpoint forms: "host:port", "tcp:host:port", or "stdio:<command ...>".
    The handshake (hello / hello_ack with matching protocol versions) runs
    at construction; any transport fault raises PolicyTransportError so the
    episode aborts instead of recording garbage.
    """

    needs_observation = True
    wants_rewards = True

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> None:
        self.endpoint = endpoint
        self._stream = _open_endpoint(endpoint, timeout)
        self._episode_id = 0
        self._step = 0
        self._stream.send({"type": "hello", "version": PROTOCOL_VERSION,
                           "obs_len": OBS_LEN})
        ack = self._stream.recv()
        if ack.get("type") != "hello_ack":
            raise ProtocolError(f"expected hello_ack, got {ack.get('type')!r}")
        if ack.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: ours {PROTOCOL_VERSION}, "
                f"peer {ack.get('version')}"
            )

    def reset(self, ctx: PolicyContext) -> None:
        self._episode_id = ctx.episode_id
        self._step = 0
        self._stream.send({"type": "reset", "scenario_id": ctx.scenario_id,
                           "seed": ctx.seed})

    def act(self, obs: Observation,
            reward_components: Optional[dict] = None,
            done: bool = False) -> Action:
        if reward_components is None:
            reward_components = {"r_term": 0.0, "r_dist": 0.0, "r_div": 0.0}
        self._stream.send({
            "type": "obs",
            "episode_id": self._episode_id,
            "step": self._step,
            "data": obs.to_vector(),
            "reward_components": reward_components,
            "done": done,
        })
        msg = self._stream.recv()
        if msg.get("type") != "act":
            raise PolicyTransportError(f"expected act, got {msg.get('type')!r}")
        try:
            action = Action(float(msg["v"]), float(msg["w"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise PolicyTransportError(f"malformed act message: {exc}")
        self._step += 1
        return action

    def close(self) -> None:
        self._stream.close()


def _open_endpoint(endpoint: str, timeout: float) -> MessageStream:
    if endpoint.startswith("stdio:"):
        import shlex

        return MessageStream.spawn(shlex.split(endpoint[len("stdio:"):]))
    spec = endpoint[len("tcp:"):] if endpoint.startswith("tcp:") else endpoint
    host, _, port = spec.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad endpoint {endpoint!r}; expected host:port")
    return MessageStream.connect_tcp(host, int(port), timeout)


BUILTIN_POLICIES = ("goal_seek", "dwa", "vo")


def make_policy(spec: str, timeout: float = DEFAULT_TIMEOUT):
    """Policy factory: 'goal_seek', 'dwa', 'vo', or 'external:<endpoint>'."""
    if spec == "goal_seek":
        return GoalSeekPolicy()
    if spec == "dwa":
        return DwaPolicy()
    if spec == "vo":
        return VoPolicy()
    if spec.startswith("external:"):
        return ExternalPolicy(spec[len("external:"):], timeout=timeout)
    raise ValueError(
        f"unknown policy {spec!r}; expected one of {BUILTIN_POLICIES} "
        "or external:<endpoint>"
    )


def _sign(x: float) -> float:
    return 1.0 if x > 0 else -1.0 if x < 0 else 0.0
