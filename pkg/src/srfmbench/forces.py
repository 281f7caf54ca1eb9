"""Social-force terms driving pedestrian motion.

A pedestrian's acceleration (unit mass, so forces are accelerations) is the
sum of a goal-attraction term and exponential repulsions from other
pedestrians, obstacles, and the robot, each repulsion weighted by an
anisotropy factor that makes sources in front push harder than sources
behind.

This module is the scalar reference implementation.  The compiled kernel in
`_speedups` replicates the exact floating-point operation sequence used
here; keep the two in sync (see tests/test_kernels.py for the bit-identity
check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .core import EPS, AgentState, Vec2, unit_and_norm

# Beyond this center distance a repulsion source is skipped entirely: the
# exponential term is below e^-9 of its contact value for all default
# parameter ranges, far under metric resolution.
NEIGHBOR_CUTOFF = 10.0

_M64 = (1 << 64) - 1


@dataclass(frozen=True)
class SrfmParams:
    """Force-model parameters.

    A_* are force strengths (m/s^2 at contact), B_* interaction ranges (m),
    lam the anisotropy weight, tau the velocity relaxation time (s).
    Obstacle parameters default to the pedestrian ones; no dataset with
    annotated obstacles exists to fit them from.
    """

    A_p: float = 2.0
    B_p: float = 0.89
    lam: float = 0.4
    tau: float = 0.6
    A_r: float = 7.93
    B_r: float = 0.99
    A_o: Optional[float] = None
    B_o: Optional[float] = None

    def __post_init__(self) -> None:
        if self.A_o is None:
            object.__setattr__(self, "A_o", self.A_p)
        if self.B_o is None:
            object.__setattr__(self, "B_o", self.B_p)
        if not (self.A_p >= 0.0 and self.A_r >= 0.0 and self.A_o >= 0.0):
            raise ValueError("force strengths must be non-negative")
        if not (self.B_p > 0.0 and self.B_r > 0.0 and self.B_o > 0.0):
            raise ValueError("force ranges must be positive")
        if not (self.tau > 0.0):
            raise ValueError("tau must be positive")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lam must lie in [0, 1]")

    def with_values(self, **kwargs: float) -> "SrfmParams":
        return replace(self, **kwargs)


#: Default parameter set (fitted on open pedestrian-robot trajectory data).
DEFAULT_PARAMS = SrfmParams()

#: Classic robot-social-force parameter set (Ferrer et al.), a standard warm
#: start for fitting.
CLASSIC_INIT = SrfmParams(A_p=2.66, B_p=0.79, lam=0.59, tau=0.43, A_r=2.66, B_r=0.79)


@dataclass(frozen=True)
class PsiSwitches:
    """Which repulsion classes apply the anisotropy factor (all by default)."""

    pedestrian: bool = True
    robot: bool = True
    obstacle: bool = True


@dataclass(frozen=True)
class ForceBreakdown:
    attraction: Vec2
    pedestrian_repulsion: Vec2
    obstacle_repulsion: Vec2
    robot_repulsion: Vec2
    total: Vec2 = field(init=False)

    def __post_init__(self) -> None:
        # Fixed summation order: attraction, pedestrians, obstacles, robot.
        tx = ((self.attraction.x + self.pedestrian_repulsion.x)
              + self.obstacle_repulsion.x) + self.robot_repulsion.x
        ty = ((self.attraction.y + self.pedestrian_repulsion.y)
              + self.obstacle_repulsion.y) + self.robot_repulsion.y
        object.__setattr__(self, "total", Vec2(tx, ty))


def anisotropy(phi: float, lam: float) -> float:
    """Directional weight psi = lam + (1 - lam)(1 + cos phi)/2.

    Equals 1 exactly at phi = 0 (source straight ahead) and lam exactly at
    phi = pi (source behind); monotonically non-increasing in between.
    """
    return lam + (1.0 - lam) * (1.0 + math.cos(phi)) * 0.5


def attraction_force(state: AgentState, params: SrfmParams) -> Vec2:
    """Goal attraction (v0 - v)/tau, driving velocity toward the desired one.

    v0 is desired_speed times the unit vector to the goal; an agent standing
    on its goal gets pure braking (-v/tau).
    """
    u, _ = unit_and_norm(state.goal - state.position)
    v0x = state.desired_speed * u.x
    v0y = state.desired_speed * u.y
    return Vec2((v0x - state.velocity.x) / params.tau,
                (v0y - state.velocity.y) / params.tau)


def tiebreak_angle(subject_id: int, source_id: int) -> float:
    """Deterministic push direction for exactly-overlapping discs.

    Hash of the ordered (subject, source) id pair, mapped to [0, 2*pi); the
    two agents of a pair get different directions, breaking the symmetry.
    """
    a = subject_id & _M64
    b = source_id & _M64
    h = (((a * 73856093) & _M64) ^ ((b * 19349663) & _M64)) & 0xFFFFFFFF
    return (h / 4294967296.0) * (2.0 * math.pi)


def _heading(state: AgentState) -> Vec2:
    """Unit heading: travel direction while moving, goal direction otherwise."""
    u, n = unit_and_norm(state.velocity)
    if n > 0.0:
        return u
    u, _ = unit_and_norm(state.goal - state.position)
    return u


def _repulsion_xy(
    sx: float, sy: float,
    hx: float, hy: float,
    src_x: float, src_y: float,
    d_sum: float,
    A: float, B: float, lam: float,
    use_psi: bool,
    subject_id: int, source_id: int,
) -> tuple[float, float]:
    """Scalar repulsion core; the compiled kernel mirrors this sequence."""
    dx = sx - src_x
    dy = sy - src_y
    x = math.sqrt(dx * dx + dy * dy)
    if x < EPS:
        ang = tiebreak_angle(subject_id, source_id)
        return A * math.cos(ang), A * math.sin(ang)
    ux = dx / x
    uy = dy / x
    if use_psi:
        if hx == 0.0 and hy == 0.0:
            phi = 0.0
        else:
            tox = -ux
            toy = -uy
            dot = hx * tox + hy * toy
            cross = hx * toy - hy * tox
            phi = math.atan2(abs(cross), dot)
        psi = lam + (1.0 - lam) * (1.0 + math.cos(phi)) * 0.5
    else:
        psi = 1.0
    mag = A * math.exp((d_sum - x) / B) * psi
    return mag * ux, mag * uy


def repulsion_force(
    subject: AgentState,
    source_position: Vec2,
    source_radius: float,
    A: float,
    B: float,
    lam: float,
    use_psi: bool = True,
    source_id: int = 0,
) -> Vec2:
    """Exponential repulsion A exp((d - x)/B) psi, directed away from the source.

    x is the center distance, d the sum of disc radii, so the exponent is
    non-positive whenever the discs are separated and the magnitude at
    contact (x = d, head-on) is exactly A.  Overlapping centers (x < EPS)
    yield a deterministic unit push of magnitude A instead of a NaN.
    """
    if not (B > 0.0):
        raise ValueError("B must be positive")
    h = _heading(subject)
    fx, fy = _repulsion_xy(
        subject.position.x, subject.position.y,
        h.x, h.y,
        source_position.x, source_position.y,
        subject.radius + source_radius,
        A, B, lam, use_psi,
        subject.id, source_id,
    )
    return Vec2(fx, fy)


def total_force(
    subject: AgentState,
    pedestrians: Sequence[AgentState],
    robot: Optional[AgentState],
    obstacles: Sequence[tuple[Vec2, float]],
    params: SrfmParams,
    robot_force_enabled: bool = True,
    psi: PsiSwitches = PsiSwitches(),
    neighbor_cutoff: float = NEIGHBOR_CUTOFF,
) -> ForceBreakdown:
    """Full force balance on one pedestrian.

    Pedestrian and obstacle sums run in input order (callers keep agents in
    ascending-id order so the summation order, and therefore the float
    result, is reproducible).  Sources farther than neighbor_cutoff are
    skipped, as is any repulsion class with zero strength; with the robot
    term that guarantee makes A_r = 0 and robot_force_enabled = False
    arithmetically identical.
    """
    att = attraction_force(subject, params)
    h = _heading(subject)
    sx, sy = subject.position
    hx, hy = h

    px = py = 0.0
    if params.A_p != 0.0:
        for other in pedestrians:
            if other.id == subject.id:
                continue
            if _beyond(sx, sy, other.position.x, other.position.y, neighbor_cutoff):
                continue
            fx, fy = _repulsion_xy(
                sx, sy, hx, hy,
                other.position.x, other.position.y,
                subject.radius + other.radius,
                params.A_p, params.B_p, params.lam,
                psi.pedestrian, subject.id, other.id,
            )
            px += fx
            py += fy

    ox = oy = 0.0
    if params.A_o != 0.0:
        for k, (center, radius) in enumerate(obstacles):
            if _beyond(sx, sy, center.x, center.y, neighbor_cutoff):
                continue
            fx, fy = _repulsion_xy(
                sx, sy, hx, hy,
                center.x, center.y,
                subject.radius + radius,
                params.A_o, params.B_o, params.lam,
                psi.obstacle, subject.id, obstacle_source_id(k),
            )
            ox += fx
            oy += fy

    rx = ry = 0.0
    if robot is not None and robot_force_enabled and params.A_r != 0.0:
        if not _beyond(sx, sy, robot.position.x, robot.position.y, neighbor_cutoff):
            rx, ry = _repulsion_xy(
                sx, sy, hx, hy,
                robot.position.x, robot.position.y,
                subject.radius + robot.radius,
                params.A_r, params.B_r, params.lam,
                psi.robot, subject.id, robot.id,
            )

    return ForceBreakdown(
        attraction=att,
        pedestrian_repulsion=Vec2(px, py),
        obstacle_repulsion=Vec2(ox, oy),
        robot_repulsion=Vec2(rx, ry),
    )


def obstacle_source_id(index: int) -> int:
    """Stable synthetic id for the index-th obstacle (agents use ids >= -1)."""
    return -(2 + index)


def _beyond(ax: float, ay: float, bx: float, by: float, cutoff: float) -> bool:
    dx = ax - bx
    dy = ay - by
    return dx * dx + dy * dy > cutoff * cutoff
