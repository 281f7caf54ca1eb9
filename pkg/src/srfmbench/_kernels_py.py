"""Pure-Python fallback for the compiled kernels.

Same floating-point operation order as `_speedups.pyx`; both backends must
produce bit-identical output (tests enforce this).  This module is selected
at import time by `kernels` when the extension is unavailable or disabled.
"""

from __future__ import annotations

import math

import numpy as np

from .core import AgentState, Vec2
from .forces import PsiSwitches, SrfmParams, total_force


def step_pedestrians_arrays(
    pos: np.ndarray,
    vel: np.ndarray,
    goal: np.ndarray,
    desired_speed: np.ndarray,
    radius: np.ndarray,
    ids: np.ndarray,
    robot_on: bool,
    robot_x: float,
    robot_y: float,
    robot_radius: float,
    robot_id: int,
    obstacles: np.ndarray,
    params: SrfmParams,
    psi: PsiSwitches,
    dt: float,
    speed_cap: float,
    goal_radius: float,
    neighbor_cutoff: float,
    out_pos: np.ndarray,
    out_vel: np.ndarray,
) -> None:
    """Advance all pedestrians one semi-implicit Euler step (synchronous).

    Forces are evaluated on the pre-step snapshot; agents within goal_radius
    of their goal get a zero desired velocity (braking) but remain force
    sources.  obstacles is an (m, 3) array of (x, y, radius).
    """
    n = pos.shape[0]
    agents = [
        AgentState(
            id=int(ids[i]),
            kind="pedestrian",
            position=Vec2(pos[i, 0], pos[i, 1]),
            velocity=Vec2(vel[i, 0], vel[i, 1]),
            goal=Vec2(goal[i, 0], goal[i, 1]),
            radius=radius[i],
            desired_speed=desired_speed[i],
        )
        for i in range(n)
    ]
    robot = None
    if robot_on:
        robot = AgentState(
            id=robot_id,
            kind="robot",
            position=Vec2(robot_x, robot_y),
            velocity=Vec2(0.0, 0.0),
            goal=Vec2(robot_x, robot_y),
            radius=robot_radius,
            desired_speed=0.0,
        )
    obstacle_list = [
        (Vec2(obstacles[k, 0], obstacles[k, 1]), obstacles[k, 2])
        for k in range(obstacles.shape[0])
    ]

    for i in range(n):
        subject = agents[i]
        gdx = subject.goal.x - subject.position.x
        gdy = subject.goal.y - subject.position.y
        gnorm = math.sqrt(gdx * gdx + gdy * gdy)
        if gnorm <= goal_radius:
            subject = AgentState(
                id=subject.id,
                kind=subject.kind,
                position=subject.position,
                velocity=subject.velocity,
                goal=subject.goal,
                radius=subject.radius,
                desired_speed=0.0,
            )
        fb = total_force(
            subject,
            agents,
            robot,
            obstacle_list,
            params,
            robot_force_enabled=True,
            psi=psi,
            neighbor_cutoff=neighbor_cutoff,
        )
        vnx = vel[i, 0] + fb.total.x * dt
        vny = vel[i, 1] + fb.total.y * dt
        sp = math.sqrt(vnx * vnx + vny * vny)
        if sp > speed_cap:
            s = speed_cap / sp
            vnx = vnx * s
            vny = vny * s
        out_vel[i, 0] = vnx
        out_vel[i, 1] = vny
        out_pos[i, 0] = pos[i, 0] + vnx * dt
        out_pos[i, 1] = pos[i, 1] + vny * dt


def frechet_arrays(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Fréchet distance between two polylines (O(n*m) DP)."""
    n = a.shape[0]
    m = b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("empty trajectory")
    ax = a[:, 0].tolist()
    ay = a[:, 1].tolist()
    bx = b[:, 0].tolist()
    by = b[:, 1].tolist()

    cur = [0.0] * m
    dx = ax[0] - bx[0]
    dy = ay[0] - by[0]
    cur[0] = math.sqrt(dx * dx + dy * dy)
    for j in range(1, m):
        dx = ax[0] - bx[j]
        dy = ay[0] - by[j]
        d = math.sqrt(dx * dx + dy * dy)
        cur[j] = d if d > cur[j - 1] else cur[j - 1]
    prev = [0.0] * m
    for i in range(1, n):
        prev, cur = cur, prev
        dx = ax[i] - bx[0]
        dy = ay[i] - by[0]
        d = math.sqrt(dx * dx + dy * dy)
        cur[0] = d if d > prev[0] else prev[0]
        for j in range(1, m):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if cur[j - 1] < best:
                best = cur[j - 1]
            dx = ax[i] - bx[j]
            dy = ay[i] - by[j]
            d = math.sqrt(dx * dx + dy * dy)
            cur[j] = d if d > best else best
    return cur[m - 1]
