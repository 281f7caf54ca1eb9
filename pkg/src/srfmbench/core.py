"""Shared geometry, trajectory, and randomness primitives.

Everything here is an immutable value type; instances can be shared freely
between threads and processes.  Positions and distances are in meters,
velocities in m/s, times in seconds, angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

# Vectors shorter than this are treated as zero-length.
EPS = 1e-9

_M64 = (1 << 64) - 1


class Vec2(NamedTuple):
    """Planar vector (or point)."""

    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":  # type: ignore[override]
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, c: float) -> "Vec2":  # type: ignore[override]
        return Vec2(self.x * c, self.y * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


def unit_and_norm(v: Vec2) -> tuple[Vec2, float]:
    """Return (unit vector, norm) of v.

    Vectors with norm below EPS collapse to ((0, 0), 0.0) so that no NaN can
    escape a division by a tiny norm.
    """
    n = math.sqrt(v[0] * v[0] + v[1] * v[1])
    if n < EPS:
        return Vec2(0.0, 0.0), 0.0
    return Vec2(v[0] / n, v[1] / n), n


def angle_between(a: Vec2, b: Vec2) -> float:
    """Unsigned angle between two vectors, in [0, pi].

    If either vector is zero-length the angle is 0 by convention (a
    stationary agent is treated as facing the other one, which is the
    conservative, maximal-repulsion choice).
    """
    ua, na = unit_and_norm(a)
    ub, nb = unit_and_norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = ua.x * ub.x + ua.y * ub.y
    cross = ua.x * ub.y - ua.y * ub.x
    return math.atan2(abs(cross), dot)


@dataclass(frozen=True)
class AgentState:
    """Kinematic state of one disc-shaped agent (pedestrian or robot)."""

    id: int
    kind: str  # "pedestrian" or "robot"
    position: Vec2
    velocity: Vec2
    goal: Vec2
    radius: float = 0.3
    desired_speed: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("pedestrian", "robot"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if not (self.radius > 0.0):
            raise ValueError("radius must be positive")
        if not (self.desired_speed >= 0.0):
            raise ValueError("desired_speed must be non-negative")
        for v in (self.position, self.velocity, self.goal):
            if not Vec2(*v).is_finite():
                raise ValueError("agent state contains non-finite components")


class Trajectory:
    """Time-stamped position sequence of one agent.

    Stored as numpy arrays; `samples` exposes the (t, Vec2) view.
    `goal_reached_at` is the first time the agent entered its goal radius
    (None if it never did, or if it started inside and was never displaced).
    """

    __slots__ = ("agent_id", "times", "positions", "goal_reached_at")

    def __init__(
        self,
        agent_id: int,
        times: np.ndarray,
        positions: np.ndarray,
        goal_reached_at: Optional[float] = None,
    ) -> None:
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        if times.ndim != 1 or positions.shape != (times.shape[0], 2):
            raise ValueError("times must be (n,), positions (n, 2)")
        if times.shape[0] >= 2 and not np.all(np.diff(times) > 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(positions)):
            raise ValueError("trajectory contains non-finite positions")
        self.agent_id = agent_id
        self.times = times
        self.positions = positions
        self.goal_reached_at = goal_reached_at

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def samples(self) -> Iterator[tuple[float, Vec2]]:
        for t, p in zip(self.times, self.positions):
            yield float(t), Vec2(float(p[0]), float(p[1]))

    def truncated(self, end_time: float) -> "Trajectory":
        """Samples with t <= end_time (at least the first sample is kept)."""
        n = int(np.searchsorted(self.times, end_time, side="right"))
        n = max(n, 1)
        return Trajectory(
            self.agent_id, self.times[:n], self.positions[:n], self.goal_reached_at
        )

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        seg = np.diff(self.positions, axis=0)
        return float(np.sum(np.sqrt(seg[:, 0] ** 2 + seg[:, 1] ** 2)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and self.goal_reached_at == other.goal_reached_at
            and self.times.shape == other.times.shape
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.positions, other.positions)
        )


def _mix64(a: int, b: int) -> int:
    """Deterministic 64-bit combine (splitmix-style), for derived stream ids."""
    z = (a ^ (b + 0x9E3779B97F4A7C15 + ((a << 6) & _M64) + (a >> 2))) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


@dataclass(frozen=True)
class RngStream:
    """Seedable, portable random stream identified by (seed, stream_id).

    Backed by numpy's PCG64, whose value sequence for a given SeedSequence is
    stable across platforms and numpy releases.  The stream is a value: each
    consumer calls `generator()` to obtain its own stateful generator.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence((self.seed & _M64, self.stream_id & _M64))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, sub_id: int) -> "RngStream":
        """Independent sub-stream, e.g. one per agent."""
        return RngStream(self.seed, _mix64(self.stream_id & _M64, sub_id & _M64))
