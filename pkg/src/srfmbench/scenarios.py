"""Scenario generators: the random training environment and five named
evaluation layouts (footpath, crosswalk, crossfootpath, box, concert).

Every generator is a pure function of (seed, n): the same arguments always
produce the same Scenario.  Concrete coordinates are artifact-defined and
collected in GEOMETRY so alternative layouts can be loaded from scenario
files without touching code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import RngStream, Vec2

SCENARIO_SCHEMA_VERSION = 1

# Rejection sampling gives up after this many draws per placement.
MAX_REJECTION_DRAWS = 10_000


@dataclass(frozen=True)
class PedSpec:
    start: Vec2
    goal: Vec2
    desired_speed: float = 1.0


@dataclass(frozen=True)
class Scenario:
    id: str
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    pedestrians: tuple[PedSpec, ...]
    robot_start: Vec2
    robot_goal: Vec2
    obstacles: tuple[tuple[Vec2, float], ...] = ()
    reassign_goals: bool = False
    seed: int = 0
    robot_theta: Optional[float] = None  # None: face the goal

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("degenerate bounds")
        points = [self.robot_start, self.robot_goal]
        for p in self.pedestrians:
            points.extend((p.start, p.goal))
        for pt in points:
            if not (xmin - 1e-9 <= pt.x <= xmax + 1e-9
                    and ymin - 1e-9 <= pt.y <= ymax + 1e-9):
                raise ValueError(f"point {pt} outside bounds {self.bounds}")

    @property
    def n_pedestrians(self) -> int:
        return len(self.pedestrians)

    def initial_robot_theta(self) -> float:
        if self.robot_theta is not None:
            return self.robot_theta
        d = self.robot_goal - self.robot_start
        if d.norm() < 1e-9:
            return 0.0
        return math.atan2(d.y, d.x)

    def to_json_dict(self) -> dict:
        return {
            "version": SCENARIO_SCHEMA_VERSION,
            "id": self.id,
            "bounds": list(self.bounds),
            "pedestrians": [
                {
                    "start": [p.start.x, p.start.y],
                    "goal": [p.goal.x, p.goal.y],
                    "desired_speed": p.desired_speed,
                }
                for p in self.pedestrians
            ],
            "robot_start": [self.robot_start.x, self.robot_start.y],
            "robot_goal": [self.robot_goal.x, self.robot_goal.y],
            "obstacles": [
                {"center": [c.x, c.y], "radius": r} for c, r in self.obstacles
            ],
            "reassign_goals": self.reassign_goals,
            "seed": self.seed,
            "robot_theta": self.robot_theta,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Scenario":
        version = d.get("version", SCENARIO_SCHEMA_VERSION)
        if version != SCENARIO_SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema version {version}")
        return Scenario(
            id=d["id"],
            bounds=tuple(d["bounds"]),
            pedestrians=tuple(
                PedSpec(
                    start=Vec2(*p["start"]),
                    goal=Vec2(*p["goal"]),
                    desired_speed=p.get("desired_speed", 1.0),
                )
                for p in d["pedestrians"]
            ),
            robot_start=Vec2(*d["robot_start"]),
            robot_goal=Vec2(*d["robot_goal"]),
            obstacles=tuple(
                (Vec2(*o["center"]), o["radius"]) for o in d.get("obstacles", [])
            ),
            reassign_goals=d.get("reassign_goals", False),
            seed=d.get("seed", 0),
            robot_theta=d.get("robot_theta"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @staticmethod
    def load(path: str | Path) -> "Scenario":
        return Scenario.from_json_dict(json.loads(Path(path).read_text()))


# Artifact-defined geometry constants (meters).  Override by editing a saved
# scenario file rather than this table.
GEOMETRY = {
    "bounds": (-7.5, -7.5, 7.5, 7.5),
    "random": {
        "robot_min_separation": 5.0,
        "spawn_clearance": 2.0,       # min distance robot start <-> pedestrians
        "ped_spacing": 2.0,           # min distance between pedestrian starts
        "goal_min_travel": 7.0,       # min distance pedestrian start -> goal
        "goal_zone": 2.0,             # keep pedestrian goals out of this radius
    },
    "footpath": {
        "lane_x": 5.5,
        "goal_x": 6.0,
        "lane_band": (0.3, 1.8),      # |y| range of the nominal lanes
        "jitter": 0.5,
        "stagger": 2.0,               # extra start depth, spreads arrivals
        "robot_start": (-6.0, -1.0),
        "robot_goal": (6.0, 1.0),
    },
    "crosswalk": {
        "lane_x": 5.5,
        "goal_x": 6.0,
        "lane_band": (-1.2, 1.2),
        "jitter": 0.5,
        "stagger": 2.0,
        # close enough that the robot reaches the crossing point while the
        # streams occupy it
        "robot_start": (-2.5, -2.5),
        "robot_goal": (4.5, 4.5),
    },
    "crossfootpath": {
        "robot_start": (0.0, -4.5),
        "robot_goal": (0.0, 4.5),
    },
    "box": {
        "circle_radius": 5.0,
        "robot_start": (0.0, 0.0),
        "robot_goal": (6.5, 0.0),
    },
    "concert": {
        "patch_half": 2.4,            # crowd occupies [-patch_half, patch_half]^2
        "jitter": 0.3,
        "robot_start": (-6.0, 0.0),
        "robot_goal": (6.0, 0.0),
    },
}


class ScenarioGenerationError(RuntimeError):
    """Rejection sampling could not satisfy the placement constraints."""


def _uniform_point(gen: np.random.Generator,
                   bounds: tuple[float, float, float, float]) -> Vec2:
    xmin, ymin, xmax, ymax = bounds
    return Vec2(float(gen.uniform(xmin, xmax)), float(gen.uniform(ymin, ymax)))


def sample_goal(
    gen: np.random.Generator,
    bounds: tuple[float, float, float, float],
    from_pos: Vec2,
    robot_goal: Vec2,
    min_travel: float = 7.0,
    goal_zone: float = 2.0,
) -> Vec2:
    """Uniform goal at least min_travel from from_pos and outside the robot
    goal's social zone.  Shared by the random generator and in-episode goal
    reassignment."""
    for _ in range(MAX_REJECTION_DRAWS):
        cand = _uniform_point(gen, bounds)
        if (cand - from_pos).norm() < min_travel:
            continue
        if (cand - robot_goal).norm() < goal_zone:
            continue
        return cand
    raise ScenarioGenerationError("goal sampling exhausted its rejection budget")


def make_random(seed: int, n_pedestrians: int = 10) -> Scenario:
    """Open 15x15 m training environment with resampled goals.

    Robot start/goal at least 5 m apart; pedestrian starts keep 2 m from the
    robot start and from each other; goals travel at least 7 m and avoid the
    robot goal's social zone.
    """
    if n_pedestrians < 0:
        raise ValueError("n_pedestrians must be >= 0")
    g = GEOMETRY["random"]
    bounds = GEOMETRY["bounds"]
    gen = RngStream(seed, 0).generator()

    robot_start = _uniform_point(gen, bounds)
    for _ in range(MAX_REJECTION_DRAWS):
        robot_goal = _uniform_point(gen, bounds)
        if (robot_goal - robot_start).norm() >= g["robot_min_separation"]:
            break
    else:
        raise ScenarioGenerationError("robot goal sampling exhausted")

    starts: list[Vec2] = []
    while len(starts) < n_pedestrians:
        for _ in range(MAX_REJECTION_DRAWS):
            cand = _uniform_point(gen, bounds)
            if (cand - robot_start).norm() < g["spawn_clearance"]:
                continue
            if any((cand - s).norm() < g["ped_spacing"] for s in starts):
                continue
            starts.append(cand)
            break
        else:
            raise ScenarioGenerationError("pedestrian start sampling exhausted")

    peds = tuple(
        PedSpec(
            start=s,
            goal=sample_goal(gen, bounds, s, robot_goal,
                             g["goal_min_travel"], g["goal_zone"]),
        )
        for s in starts
    )
    return Scenario(
        id="random",
        bounds=bounds,
        pedestrians=peds,
        robot_start=robot_start,
        robot_goal=robot_goal,
        reassign_goals=True,
        seed=seed,
    )


def _lane_pedestrians(
    gen: np.random.Generator,
    n: int,
    geometry: dict,
    mirror_band: bool,
) -> list[PedSpec]:
    """Two opposing lanes along the x axis.

    Eastbound agents occupy the band, westbound the mirrored band (or the
    same band for a shared crossing).  Start x positions are staggered so
    opposing agents do not move in lockstep and the flow occupies the
    corridor for several seconds.
    """
    lane_x = geometry["lane_x"]
    goal_x = geometry["goal_x"]
    lo, hi = geometry["lane_band"]
    jitter = geometry["jitter"]
    stagger = geometry["stagger"]
    n_east = (n + 1) // 2
    n_west = n - n_east
    peds: list[PedSpec] = []
    for count, sign in ((n_east, 1.0), (n_west, -1.0)):
        if count == 0:
            continue
        if count == 1:
            lanes = [(lo + hi) / 2.0]
        else:
            lanes = list(np.linspace(lo, hi, count))
        for y_nom in lanes:
            y_lane = sign * y_nom if mirror_band else y_nom
            y0 = y_lane + float(gen.uniform(-jitter, jitter))
            x0 = sign * (-lane_x - float(gen.uniform(0.0, stagger)))
            peds.append(PedSpec(start=Vec2(x0, y0), goal=Vec2(sign * goal_x, y_lane)))
    return peds


def make_footpath(seed: int, n: int = 10) -> Scenario:
    """Parallel bidirectional flow; the robot travels with the flow."""
    g = GEOMETRY["footpath"]
    gen = RngStream(seed, 0).generator()
    peds = _lane_pedestrians(gen, n, g, mirror_band=True)
    return Scenario(
        id="footpath",
        bounds=GEOMETRY["bounds"],
        pedestrians=tuple(peds),
        robot_start=Vec2(*g["robot_start"]),
        robot_goal=Vec2(*g["robot_goal"]),
        seed=seed,
    )


def make_crosswalk(seed: int, n: int = 10) -> Scenario:
    """Two perpendicular streams crossing at the origin; the robot's straight
    path runs along the diagonal through the crossing point."""
    g = GEOMETRY["crosswalk"]
    gen = RngStream(seed, 0).generator()
    n_x = (n + 1) // 2
    n_y = n - n_x
    peds = _lane_pedestrians(gen, n_x, g, mirror_band=False)
    vertical = _lane_pedestrians(gen, n_y, g, mirror_band=False)
    for p in vertical:
        peds.append(PedSpec(
            start=Vec2(p.start.y, p.start.x),
            goal=Vec2(p.goal.y, p.goal.x),
            desired_speed=p.desired_speed,
        ))
    return Scenario(
        id="crosswalk",
        bounds=GEOMETRY["bounds"],
        pedestrians=tuple(peds),
        robot_start=Vec2(*g["robot_start"]),
        robot_goal=Vec2(*g["robot_goal"]),
        seed=seed,
    )


def make_crossfootpath(seed: int, n: int = 10) -> Scenario:
    """Footpath flow with the robot cutting across it."""
    g_fp = GEOMETRY["footpath"]
    g = GEOMETRY["crossfootpath"]
    gen = RngStream(seed, 0).generator()
    peds = _lane_pedestrians(gen, n, g_fp, mirror_band=True)
    return Scenario(
        id="crossfootpath",
        bounds=GEOMETRY["bounds"],
        pedestrians=tuple(peds),
        robot_start=Vec2(*g["robot_start"]),
        robot_goal=Vec2(*g["robot_goal"]),
        seed=seed,
    )


def make_box(seed: int, n: int = 10) -> Scenario:
    """Pedestrians evenly spaced on a circle, each heading to the antipodal
    point; the robot starts at the center and must escape the collapsing
    formation."""
    g = GEOMETRY["box"]
    gen = RngStream(seed, 0).generator()
    r = g["circle_radius"]
    phase = float(gen.uniform(0.0, 2.0 * math.pi / max(n, 1))) if n else 0.0
    peds = []
    for i in range(n):
        ang = phase + 2.0 * math.pi * i / n
        start = Vec2(r * math.cos(ang), r * math.sin(ang))
        peds.append(PedSpec(start=start, goal=Vec2(-start.x, -start.y)))
    return Scenario(
        id="box",
        bounds=GEOMETRY["bounds"],
        pedestrians=tuple(peds),
        robot_start=Vec2(*g["robot_start"]),
        robot_goal=Vec2(*g["robot_goal"]),
        seed=seed,
    )


def make_concert(seed: int, n: int = 10) -> Scenario:
    """Standing crowd on a jittered grid, goal = start (agents displaced by
    the robot walk back to their spot); the robot's straight path cuts
    through the patch."""
    g = GEOMETRY["concert"]
    gen = RngStream(seed, 0).generator()
    side = max(1, math.ceil(math.sqrt(n)))
    half = g["patch_half"]
    coords = np.linspace(-half, half, side) if side > 1 else np.array([0.0])
    peds = []
    for i in range(n):
        gx = coords[i % side]
        gy = coords[i // side % side]
        spot = Vec2(
            float(gx + gen.uniform(-g["jitter"], g["jitter"])),
            float(gy + gen.uniform(-g["jitter"], g["jitter"])),
        )
        peds.append(PedSpec(start=spot, goal=spot))
    return Scenario(
        id="concert",
        bounds=GEOMETRY["bounds"],
        pedestrians=tuple(peds),
        robot_start=Vec2(*g["robot_start"]),
        robot_goal=Vec2(*g["robot_goal"]),
        seed=seed,
    )


GENERATORS: dict[str, Callable[[int, int], Scenario]] = {
    "random": make_random,
    "footpath": make_footpath,
    "crosswalk": make_crosswalk,
    "crossfootpath": make_crossfootpath,
    "box": make_box,
    "concert": make_concert,
}

#: The five evaluation layouts (fixed goals, twin-run capable).
EVALUATION_SCENARIOS = ("footpath", "crosswalk", "crossfootpath", "box", "concert")


def make_scenario(name: str, seed: int, n_pedestrians: int = 10) -> Scenario:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; expected one of {sorted(GENERATORS)}"
        ) from None
    return gen(seed, n_pedestrians)
