"""Trajectory and episode metrics: discrete Fréchet distance, ADE, minimum
robot distance, path length/time, and the two-sample significance test used
by the benchmark reports."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .core import Trajectory
from .counterfactual import TwinRunResult


def frechet(a: Trajectory, b: Trajectory) -> float:
    """Discrete Fréchet distance over the position sequences (timestamps
    ignored); symmetric, handles unequal lengths."""
    if len(a) < 1 or len(b) < 1:
        raise ValueError("frechet needs at least one sample per trajectory")
    return float(kernels.frechet_arrays(
        np.ascontiguousarray(a.positions), np.ascontiguousarray(b.positions)
    ))


def ade(predicted: Trajectory, actual: Trajectory) -> float:
    """Average displacement error: mean Euclidean position error over a
    shared time grid."""
    if len(predicted) != len(actual):
        raise ValueError("ade needs equal sample counts")
    if len(predicted) < 1:
        raise ValueError("ade needs at least one sample")
    if not np.allclose(predicted.times, actual.times, rtol=0.0, atol=1e-9):
        raise ValueError("ade needs a shared time grid")
    d = predicted.positions - actual.positions
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def _deviation_window(traj: Trajectory, end_time: float) -> Trajectory:
    """Truncate at the trajectory's own arrival time (post-arrival idling
    would dilute the deviation signal); full trajectory if it never arrived."""
    cut = traj.goal_reached_at if traj.goal_reached_at is not None else end_time
    return traj.truncated(cut)


@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-twin-run summary (one benchmark table row before aggregation)."""

    scenario_id: str
    seed: int
    outcome: str
    n_pedestrians: int
    frechet_mean: float
    frechet_max: float
    min_robot_distance: float
    mean_path_length: float
    mean_traversal_time: float
    frechet_per_ped: dict[int, float]


def min_robot_distance(record) -> float:
    """Minimum robot-pedestrian center distance over a factual run."""
    best = math.inf
    rp = record.robot.positions
    for traj in record.pedestrians.values():
        d = traj.positions - rp
        m = float(np.min(np.hypot(d[:, 0], d[:, 1])))
        if m < best:
            best = m
    return best


def episode_metrics(twin: TwinRunResult) -> EpisodeMetrics:
    fact = twin.factual
    end_time = fact.end_time
    per_ped: dict[int, float] = {}
    lengths = []
    times = []
    for pid, f_traj, c_traj in twin.pairing:
        per_ped[pid] = frechet(_deviation_window(f_traj, end_time),
                               _deviation_window(c_traj, twin.counterfactual.end_time))
        window = _deviation_window(f_traj, end_time)
        lengths.append(window.path_length())
        t_reach = (f_traj.goal_reached_at
                   if f_traj.goal_reached_at is not None else end_time)
        times.append(t_reach)
    values = list(per_ped.values())
    return EpisodeMetrics(
        scenario_id=fact.scenario.id,
        seed=fact.scenario.seed,
        outcome=fact.outcome,
        n_pedestrians=len(per_ped),
        frechet_mean=float(np.mean(values)) if values else 0.0,
        frechet_max=float(np.max(values)) if values else 0.0,
        min_robot_distance=min_robot_distance(fact),
        mean_path_length=float(np.mean(lengths)) if lengths else 0.0,
        mean_traversal_time=float(np.mean(times)) if times else 0.0,
        frechet_per_ped=per_ped,
    )


def t_test_independent(
    sample_a,
    sample_b,
    alpha: float = 0.05,
    welch: bool = False,
) -> tuple[float, float, bool]:
    """Two-sample t test; equal-variance pooled form by default, Welch
    behind the flag.  Returns (t, two-sided p, significant at alpha)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least 2 values")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    mean_diff = float(np.mean(a) - np.mean(b))
    if welch:
        denom2 = va / na + vb / nb
        if denom2 <= 0.0:
            raise ValueError("degenerate variance")
        t = mean_diff / math.sqrt(denom2)
        df = denom2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    else:
        pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        if pooled <= 0.0:
            raise ValueError("degenerate variance")
        t = mean_diff / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = na + nb - 2
    p = 2.0 * float(stats.t.sf(abs(t), df))
    return t, p, p < alpha
