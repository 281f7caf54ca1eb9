"""Parameter estimation from trajectory data.

Pipeline: ingest trajectory files, classify interaction vs non-interaction
by the 3 m robot-distance rule, then fit force parameters in two stages by
box-constrained nonlinear least squares on one-step-ahead prediction
residuals:

  pedestrian stage   (A_p, B_p, lam, tau) on non-interaction trajectories
  robot stage        (A_r, B_r) on interaction trajectories, pedestrian
                     parameters frozen

Model evaluation uses full rollouts scored by average displacement error.
Velocities are backward differences, which reconstruct the semi-implicit
Euler state exactly on model-generated data; the first transition of every
trajectory is excluded because no backward velocity exists there.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .core import EPS, RngStream, Trajectory, Vec2
from .forces import CLASSIC_INIT, NEIGHBOR_CUTOFF, SrfmParams, tiebreak_angle

#: Disc radii assumed for dataset agents (trajectory files carry none).
PED_RADIUS = 0.3
ROBOT_RADIUS = 0.3

#: Robot-distance threshold separating interaction from non-interaction.
INTERACTION_DISTANCE = 3.0

#: Trajectories shorter than this are discarded as fitting subjects.
MIN_DURATION = 2.0

INTERACTION = "interaction"
NON_INTERACTION = "non_interaction"
DISCARDED = "discarded"

MODES = ("pedestrian_only", "robot_as_pedestrian", "robot_force")

PEDESTRIAN_STAGE = "pedestrian_stage"
ROBOT_STAGE = "robot_stage"

STAGE_PARAMS = {
    PEDESTRIAN_STAGE: ("A_p", "B_p", "lam", "tau"),
    ROBOT_STAGE: ("A_r", "B_r"),
}
STAGE_MODE = {PEDESTRIAN_STAGE: "pedestrian_only", ROBOT_STAGE: "robot_force"}

DEFAULT_BOUNDS = {
    "A_p": (0.0, 20.0),
    "B_p": (0.05, 5.0),
    "lam": (0.0, 1.0),
    "tau": (0.05, 5.0),
    "A_r": (0.0, 50.0),
    "B_r": (0.05, 5.0),
}


@dataclass
class DatasetTrajectory:
    """One pedestrian trajectory plus everything a one-step predictor needs:
    per-sample neighbor and robot positions, a goal estimate, and a desired
    speed estimate."""

    recording_id: str
    agent_id: int
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    goal: Vec2
    desired_speed: float
    neighbors: list[list[tuple[float, float]]]
    robot_track: list[Optional[tuple[float, float]]]
    klass: str
    min_robot_distance: float

    @property
    def n_samples(self) -> int:
        return int(self.times.shape[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def as_trajectory(self) -> Trajectory:
        return Trajectory(self.agent_id, self.times, self.positions)


# -- scalar force core -----------------------------------------------------
# Same math as forces.total_force, specialized to flat floats so the fitting
# loops stay fast; tests pin it bitwise against the reference implementation.


def _repulsion_terms(
    sx: float, sy: float, hx: float, hy: float,
    qx: float, qy: float, d_sum: float,
    A: float, B: float, lam: float,
    subject_id: int, source_id: int,
):
    """Value and parameter derivatives of one repulsion term.

    Returns (fx, fy, e_psi_ux, e_psi_uy, dB_x, dB_y, dlam_x, dlam_y) where
    e_psi_* is exp((d-x)/B) * psi * u (the dF/dA direction)."""
    dx = sx - qx
    dy = sy - qy
    x = math.sqrt(dx * dx + dy * dy)
    if x < EPS:
        ang = tiebreak_angle(subject_id, source_id)
        ux = math.cos(ang)
        uy = math.sin(ang)
        return A * ux, A * uy, ux, uy, 0.0, 0.0, 0.0, 0.0
    ux = dx / x
    uy = dy / x
    if hx == 0.0 and hy == 0.0:
        phi = 0.0
    else:
        tox = -ux
        toy = -uy
        dot = hx * tox + hy * toy
        cross = hx * toy - hy * tox
        phi = math.atan2(abs(cross), dot)
    c = (1.0 + math.cos(phi)) * 0.5
    psi = lam + (1.0 - lam) * c
    e = math.exp((d_sum - x) / B)
    mag = A * e * psi
    fx = mag * ux
    fy = mag * uy
    e_psi_x = e * psi * ux
    e_psi_y = e * psi * uy
    db = mag * (x - d_sum) / (B * B)
    dlam = A * e * (1.0 - c)
    return fx, fy, e_psi_x, e_psi_y, db * ux, db * uy, dlam * ux, dlam * uy


def _heading_xy(vx: float, vy: float, gx: float, gy: float,
                px: float, py: float) -> tuple[float, float]:
    spd = math.sqrt(vx * vx + vy * vy)
    if spd >= EPS:
        return vx / spd, vy / spd
    dx = gx - px
    dy = gy - py
    n = math.sqrt(dx * dx + dy * dy)
    if n < EPS:
        return 0.0, 0.0
    return dx / n, dy / n


_CUTOFF2 = NEIGHBOR_CUTOFF * NEIGHBOR_CUTOFF


def _transition_force(
    px: float, py: float, vx: float, vy: float,
    goal: Vec2, desired_speed: float,
    neighbors: Sequence[tuple[float, float]],
    robot: Optional[tuple[float, float]],
    params: SrfmParams,
    mode: str,
    subject_id: int,
    want_jacobian: bool,
    stage_names: tuple[str, ...] = (),
):
    """Total force on the subject plus, if requested, its derivatives with
    respect to the stage parameters."""
    gdx = goal.x - px
    gdy = goal.y - py
    gn = math.sqrt(gdx * gdx + gdy * gdy)
    if gn < EPS:
        ugx = ugy = 0.0
    else:
        ugx = gdx / gn
        ugy = gdy / gn
    v0x = desired_speed * ugx
    v0y = desired_speed * ugy
    attx = (v0x - vx) / params.tau
    atty = (v0y - vy) / params.tau

    hx, hy = _heading_xy(vx, vy, goal.x, goal.y, px, py)

    dA_x = dA_y = dB_x = dB_y = dl_x = dl_y = 0.0
    rA_x = rA_y = rB_x = rB_y = 0.0
    ped_x = ped_y = 0.0
    rob_x = rob_y = 0.0

    if params.A_p != 0.0 or want_jacobian:
        for j, (qx, qy) in enumerate(neighbors):
            ddx = px - qx
            ddy = py - qy
            if ddx * ddx + ddy * ddy > _CUTOFF2:
                continue
            t = _repulsion_terms(px, py, hx, hy, qx, qy,
                                 PED_RADIUS + PED_RADIUS,
                                 params.A_p, params.B_p, params.lam,
                                 subject_id, _neighbor_source_id(subject_id, j))
            ped_x += t[0]
            ped_y += t[1]
            if want_jacobian:
                dA_x += t[2]
                dA_y += t[3]
                dB_x += t[4]
                dB_y += t[5]
                dl_x += t[6]
                dl_y += t[7]

    if robot is not None and mode != "pedestrian_only":
        ddx = px - robot[0]
        ddy = py - robot[1]
        if ddx * ddx + ddy * ddy <= _CUTOFF2:
            if mode == "robot_as_pedestrian":
                A, B = params.A_p, params.B_p
            else:
                A, B = params.A_r, params.B_r
            t = _repulsion_terms(px, py, hx, hy, robot[0], robot[1],
                                 PED_RADIUS + ROBOT_RADIUS,
                                 A, B, params.lam, subject_id, -1)
            if mode == "robot_as_pedestrian":
                # the robot joins the pedestrian repulsion sum
                ped_x += t[0]
                ped_y += t[1]
                if want_jacobian:
                    dA_x += t[2]
                    dA_y += t[3]
                    dB_x += t[4]
                    dB_y += t[5]
                    dl_x += t[6]
                    dl_y += t[7]
            else:
                rob_x = t[0]
                rob_y = t[1]
                if want_jacobian:
                    rA_x += t[2]
                    rA_y += t[3]
                    rB_x += t[4]
                    rB_y += t[5]

    # same summation order as the simulator's force breakdown
    # (attraction, pedestrians, obstacles (none in datasets), robot)
    fx = ((attx + ped_x) + 0.0) + rob_x
    fy = ((atty + ped_y) + 0.0) + rob_y

    if not want_jacobian:
        return fx, fy, None

    grads = {}
    for name in stage_names:
        if name == "A_p":
            grads[name] = (dA_x, dA_y)
        elif name == "B_p":
            grads[name] = (dB_x, dB_y)
        elif name == "lam":
            grads[name] = (dl_x, dl_y)
        elif name == "tau":
            t2 = params.tau * params.tau
            grads[name] = (-(v0x - vx) / t2, -(v0y - vy) / t2)
        elif name == "A_r":
            grads[name] = (rA_x, rA_y)
        elif name == "B_r":
            grads[name] = (rB_x, rB_y)
        else:
            raise ValueError(f"unknown stage parameter {name!r}")
    return fx, fy, grads


def _neighbor_source_id(subject_id: int, j: int) -> int:
    # Neighbor identity is not tracked in the flattened per-sample lists;
    # derive a stable pseudo-id from the slot index.  Only the overlap
    # tie-break consumes it, and datasets never contain exact overlaps.
    return (subject_id + 1) * 1_000 + j


def _transitions(traj: DatasetTrajectory):
    """Yield (k, dt) for the usable transitions k -> k+1 (k >= 1)."""
    for k in range(1, traj.n_samples - 1):
        yield k, float(traj.times[k + 1] - traj.times[k])


def residuals(
    params: SrfmParams,
    trajectories: Sequence[DatasetTrajectory],
    mode: str,
) -> np.ndarray:
    """One-step-ahead prediction residuals, two components per transition.

    Order: trajectories in input order, transitions in time order, (x, y).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    out: list[float] = []
    for traj in trajectories:
        pos = traj.positions
        vel = traj.velocities
        for k, dt in _transitions(traj):
            fx, fy, _ = _transition_force(
                pos[k, 0], pos[k, 1], vel[k, 0], vel[k, 1],
                traj.goal, traj.desired_speed,
                traj.neighbors[k], traj.robot_track[k],
                params, mode, traj.agent_id, want_jacobian=False,
            )
            vnx = vel[k, 0] + fx * dt
            vny = vel[k, 1] + fy * dt
            out.append(pos[k, 0] + vnx * dt - pos[k + 1, 0])
            out.append(pos[k, 1] + vny * dt - pos[k + 1, 1])
    return np.array(out, dtype=float)


def residual_jacobian(
    params: SrfmParams,
    trajectories: Sequence[DatasetTrajectory],
    mode: str,
    stage_names: tuple[str, ...],
) -> np.ndarray:
    """Analytic Jacobian of `residuals` with respect to stage_names."""
    rows: list[list[float]] = []
    for traj in trajectories:
        pos = traj.positions
        vel = traj.velocities
        for k, dt in _transitions(traj):
            _, _, grads = _transition_force(
                pos[k, 0], pos[k, 1], vel[k, 0], vel[k, 1],
                traj.goal, traj.desired_speed,
                traj.neighbors[k], traj.robot_track[k],
                params, mode, traj.agent_id, want_jacobian=True,
                stage_names=stage_names,
            )
            dt2 = dt * dt
            rows.append([grads[name][0] * dt2 for name in stage_names])
            rows.append([grads[name][1] * dt2 for name in stage_names])
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class FitResult:
    params: SrfmParams
    residual: float  # sum of squared residuals at the solution (m^2)
    iterations: int
    converged: bool
    fitted_names: tuple[str, ...]
    confidence: dict[str, float]  # 95% half-widths from the Jacobian


def fit(
    trajectories: Sequence[DatasetTrajectory],
    stage: str,
    init: Optional[SrfmParams] = None,
    bounds: Optional[dict[str, tuple[float, float]]] = None,
    base_params: Optional[SrfmParams] = None,
    freeze: Sequence[str] = (),
    filter_class: bool = True,
) -> FitResult:
    """Box-constrained damped least squares over one stage's parameters.

    The pedestrian stage fits (A_p, B_p, lam, tau) on non-interaction
    trajectories; the robot stage fits (A_r, B_r) on interaction
    trajectories with the pedestrian values frozen (pass them as
    base_params).  Convergence: step norm < 1e-8, relative residual
    decrease < 1e-10, or 500 evaluations (reported, never silent).
    """
    if stage not in STAGE_PARAMS:
        raise ValueError(f"unknown stage {stage!r}")
    wanted = NON_INTERACTION if stage == PEDESTRIAN_STAGE else INTERACTION
    subjects = [t for t in trajectories if not filter_class or t.klass == wanted]
    if not subjects:
        raise ValueError(f"no {wanted} trajectories to fit")
    names = tuple(n for n in STAGE_PARAMS[stage] if n not in tuple(freeze))
    if not names:
        raise ValueError("all stage parameters are frozen")
    mode = STAGE_MODE[stage]
    init = init if init is not None else CLASSIC_INIT
    base = base_params if base_params is not None else init
    table = dict(DEFAULT_BOUNDS)
    if bounds:
        table.update(bounds)

    x0 = np.array([getattr(init, n) for n in names], dtype=float)
    lo = np.array([table[n][0] for n in names], dtype=float)
    hi = np.array([table[n][1] for n in names], dtype=float)
    x0 = np.clip(x0, lo, hi)

    def assemble(x: np.ndarray) -> SrfmParams:
        return base.with_values(**{n: float(v) for n, v in zip(names, x)})

    def fun(x: np.ndarray) -> np.ndarray:
        return residuals(assemble(x), subjects, mode)

    def jac(x: np.ndarray) -> np.ndarray:
        return residual_jacobian(assemble(x), subjects, mode, names)

    probe = fun(x0)
    if probe.size == 0:
        raise ValueError("trajectory set yields no usable transitions")

    res = least_squares(
        fun, x0, jac=jac, bounds=(lo, hi), method="trf",
        xtol=1e-8, ftol=1e-10, gtol=None, max_nfev=500,
    )
    fitted = assemble(res.x)
    ssr = float(np.dot(res.fun, res.fun))
    m, p = res.fun.size, len(names)
    confidence = {n: math.nan for n in names}
    if m > p:
        sigma2 = ssr / (m - p)
        jtj = res.jac.T @ res.jac
        try:
            cov = sigma2 * np.linalg.inv(jtj)
            for i, n in enumerate(names):
                confidence[n] = 1.96 * math.sqrt(max(cov[i, i], 0.0))
        except np.linalg.LinAlgError:
            pass
    return FitResult(
        params=fitted,
        residual=ssr,
        iterations=int(res.nfev),
        converged=bool(res.status > 0),
        fitted_names=names,
        confidence=confidence,
    )


def rollout(traj: DatasetTrajectory, params: SrfmParams, mode: str) -> Trajectory:
    """Full forward simulation of one trajectory from its first usable state
    (second sample), with observed neighbor and robot positions.

    Returns predictions on the observed time grid starting at the second
    sample; the subject state is rolled, everything else is taken from data.
    """
    if traj.n_samples < 3:
        raise ValueError("rollout needs at least 3 samples")
    pos = traj.positions
    vel = traj.velocities
    px, py = float(pos[1, 0]), float(pos[1, 1])
    vx, vy = float(vel[1, 0]), float(vel[1, 1])
    pred = [(px, py)]
    for k, dt in _transitions(traj):
        fx, fy, _ = _transition_force(
            px, py, vx, vy, traj.goal, traj.desired_speed,
            traj.neighbors[k], traj.robot_track[k],
            params, mode, traj.agent_id, want_jacobian=False,
        )
        vx = vx + fx * dt
        vy = vy + fy * dt
        px = px + vx * dt
        py = py + vy * dt
        pred.append((px, py))
    return Trajectory(traj.agent_id, traj.times[1:], np.array(pred, dtype=float))


def evaluate_ade(
    trajectories: Sequence[DatasetTrajectory],
    params: SrfmParams,
    mode: str,
) -> float:
    """Mean over trajectories of the rollout average displacement error."""
    from .metrics import ade

    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    errors = []
    for traj in trajectories:
        if traj.n_samples < 3:
            continue
        predicted = rollout(traj, params, mode)
        observed = Trajectory(traj.agent_id, traj.times[1:], traj.positions[1:])
        errors.append(ade(predicted, observed))
    if not errors:
        raise ValueError("no trajectory long enough for a rollout")
    return float(np.mean(errors))


# -- ingest ------------------------------------------------------------------


def _finite_difference_velocities(times: np.ndarray,
                                  positions: np.ndarray) -> np.ndarray:
    """Backward differences (exact for semi-implicit Euler data); the first
    sample gets a forward difference placeholder."""
    n = times.shape[0]
    vel = np.zeros((n, 2), dtype=float)
    if n >= 2:
        dt0 = times[1] - times[0]
        vel[0] = (positions[1] - positions[0]) / dt0
        dts = (times[1:] - times[:-1])[:, None]
        vel[1:] = (positions[1:] - positions[:-1]) / dts
    return vel


def ingest(path: str | Path, fmt: Optional[str] = None,
           classify: bool = True) -> list[DatasetTrajectory]:
    """Parse a trajectory file into fitting-ready DatasetTrajectory values.

    Formats: "jsonl" (one object per line) or "csv", with columns
    recording_id, agent_id, t, x, y, is_robot; auto-detected from the
    extension when fmt is omitted.  Pedestrian goals are estimated as the
    final observed position, desired speeds as the mean observed speed.
    Trajectories shorter than MIN_DURATION are kept only as force sources
    (class "discarded").
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    rows = _read_rows(path, fmt)

    recordings: dict[str, dict] = {}
    for rec_id, agent_id, t, x, y, is_robot in rows:
        rec = recordings.setdefault(rec_id, {"robot": [], "agents": {}})
        if is_robot:
            rec["robot"].append((t, x, y))
        else:
            rec["agents"].setdefault(agent_id, []).append((t, x, y))

    out: list[DatasetTrajectory] = []
    for rec_id in sorted(recordings):
        rec = recordings[rec_id]
        robot_rows = sorted(rec["robot"])
        robot_t = np.array([r[0] for r in robot_rows], dtype=float)
        robot_xy = np.array([[r[1], r[2]] for r in robot_rows], dtype=float)
        if classify and robot_t.size == 0:
            raise ValueError(
                f"recording {rec_id!r} has no robot track but interaction "
                "classification was requested"
            )

        tracks: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for agent_id, samples in rec["agents"].items():
            samples = sorted(samples)
            t = np.array([s[0] for s in samples], dtype=float)
            xy = np.array([[s[1], s[2]] for s in samples], dtype=float)
            if t.size >= 2 and not np.all(np.diff(t) > 0.0):
                raise ValueError(
                    f"non-monotone timestamps for agent {agent_id} "
                    f"in recording {rec_id!r}"
                )
            tracks[agent_id] = (t, xy)

        # sample-time lookup for neighbors
        position_at = {
            agent_id: {float(tt): (float(p[0]), float(p[1]))
                       for tt, p in zip(t, xy)}
            for agent_id, (t, xy) in tracks.items()
        }

        def robot_at(tt: float) -> Optional[tuple[float, float]]:
            if robot_t.size == 0:
                return None
            if tt < robot_t[0] or tt > robot_t[-1]:
                return None
            x = float(np.interp(tt, robot_t, robot_xy[:, 0]))
            y = float(np.interp(tt, robot_t, robot_xy[:, 1]))
            return (x, y)

        for agent_id in sorted(tracks):
            t, xy = tracks[agent_id]
            if t.size < 2:
                continue
            neighbors = []
            robot_track = []
            for tt in t:
                tt = float(tt)
                neighbors.append([
                    position_at[other][tt]
                    for other in sorted(tracks)
                    if other != agent_id and tt in position_at[other]
                ])
                robot_track.append(robot_at(tt))
            dists = [
                math.hypot(p[0] - r[0], p[1] - r[1])
                for p, r in zip(xy, robot_track) if r is not None
            ]
            min_robot = min(dists) if dists else math.inf
            duration = float(t[-1] - t[0])
            if duration < MIN_DURATION:
                klass = DISCARDED
            elif not classify:
                klass = NON_INTERACTION
            else:
                klass = (NON_INTERACTION if min_robot > INTERACTION_DISTANCE
                         else INTERACTION)
            vel = _finite_difference_velocities(t, xy)
            speeds = np.hypot(vel[1:, 0], vel[1:, 1])
            out.append(DatasetTrajectory(
                recording_id=rec_id,
                agent_id=agent_id,
                times=t,
                positions=xy,
                velocities=vel,
                goal=Vec2(float(xy[-1, 0]), float(xy[-1, 1])),
                desired_speed=float(np.mean(speeds)) if speeds.size else 0.0,
                neighbors=neighbors,
                robot_track=robot_track,
                klass=klass,
                min_robot_distance=min_robot,
            ))
    return out


def _read_rows(path: Path, fmt: str):
    rows = []
    if fmt == "jsonl":
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            rows.append((str(d["recording_id"]), int(d["agent_id"]),
                         float(d["t"]), float(d["x"]), float(d["y"]),
                         bool(d["is_robot"])))
    elif fmt == "csv":
        with path.open(newline="") as fh:
            for d in csv.DictReader(fh):
                rows.append((str(d["recording_id"]), int(d["agent_id"]),
                             float(d["t"]), float(d["x"]), float(d["y"]),
                             d["is_robot"].strip().lower() in ("1", "true")))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return rows


def write_rows(path: str | Path, rows: Sequence[tuple],
               append: bool = False) -> None:
    """Write (recording_id, agent_id, t, x, y, is_robot) rows as JSONL."""
    lines = []
    for rec_id, agent_id, t, x, y, is_robot in rows:
        lines.append(json.dumps({
            "recording_id": rec_id, "agent_id": agent_id, "t": t,
            "x": x, "y": y, "is_robot": is_robot,
        }))
    text = "\n".join(lines) + "\n"
    if append:
        with Path(path).open("a") as fh:
            fh.write(text)
    else:
        Path(path).write_text(text)


# -- synthetic data ----------------------------------------------------------


def synthesize_dataset(
    params: SrfmParams,
    n_recordings: int,
    seed: int,
    kind: str = INTERACTION,
    peds_per_recording: int = 3,
    steps: int = 80,
    dt: float = 0.1,
    out_path: Optional[str | Path] = None,
    append: bool = False,
) -> list[DatasetTrajectory]:
    """Generate model-exact trajectory data with known parameters.

    Pedestrians start on a ring with crossing antipodal goals (rich
    encounter geometry for identifiability).  Interaction recordings add a
    robot track cutting through the group, whose force follows the
    robot-specific parameters; non-interaction recordings park the robot
    well outside the 3 m rule (recordings always carry a robot track, like
    data collected by the robot itself), and their dynamics exclude the
    robot term entirely, matching the pedestrian-stage model.  The emitted
    DatasetTrajectory values carry the true goals and desired speeds, so
    fit/ADE tests exercise the estimator rather than the goal-estimation
    heuristics; pass out_path to also write raw rows for the file-ingest
    pipeline (append=True accumulates mixed datasets).
    """
    if kind not in (INTERACTION, NON_INTERACTION):
        raise ValueError(f"unknown kind {kind!r}")
    all_rows = []
    out: list[DatasetTrajectory] = []
    for rec in range(n_recordings):
        gen = RngStream(seed, rec).generator()
        m = peds_per_recording
        ring = float(gen.uniform(3.0, 5.0))
        angles = gen.uniform(0.0, 2.0 * math.pi, size=m)
        starts = np.stack([ring * np.cos(angles), ring * np.sin(angles)], axis=1)
        goals = -starts + gen.uniform(-1.0, 1.0, size=(m, 2))
        speeds = gen.uniform(0.9, 1.4, size=m)

        phi = float(gen.uniform(0.0, 2.0 * math.pi))
        if kind == INTERACTION:
            r0 = np.array([math.cos(phi), math.sin(phi)]) * float(gen.uniform(3.0, 4.5))
            robot_dir = -r0 / np.linalg.norm(r0)
            robot_speed = 0.5
        else:
            # parked far outside the interaction rule; present in the file
            # but excluded from the generating dynamics
            r0 = np.array([math.cos(phi), math.sin(phi)]) * 10.0
            robot_dir = np.zeros(2)
            robot_speed = 0.0

        pos = starts.copy()
        vel = np.zeros((m, 2))
        hist = np.empty((steps + 1, m, 2))
        hist[0] = pos
        robot_hist = np.empty((steps + 1, 2)) if r0 is not None else None
        if robot_hist is not None:
            robot_hist[0] = r0
        for k in range(steps):
            t = k * dt
            robot = None
            if r0 is not None:
                rp = r0 + robot_dir * (robot_speed * t)
                robot = (float(rp[0]), float(rp[1]))
            new_pos = pos.copy()
            new_vel = vel.copy()
            for i in range(m):
                neighbor_xy = [(float(pos[j, 0]), float(pos[j, 1]))
                               for j in range(m) if j != i]
                fx, fy, _ = _transition_force(
                    float(pos[i, 0]), float(pos[i, 1]),
                    float(vel[i, 0]), float(vel[i, 1]),
                    Vec2(float(goals[i, 0]), float(goals[i, 1])),
                    float(speeds[i]),
                    neighbor_xy, robot, params,
                    "robot_force" if kind == INTERACTION else "pedestrian_only",
                    i, want_jacobian=False,
                )
                vnx = vel[i, 0] + fx * dt
                vny = vel[i, 1] + fy * dt
                new_vel[i] = (vnx, vny)
                new_pos[i] = (pos[i, 0] + vnx * dt, pos[i, 1] + vny * dt)
            pos, vel = new_pos, new_vel
            hist[k + 1] = pos
            if robot_hist is not None:
                robot_hist[k + 1] = r0 + robot_dir * (robot_speed * (k + 1) * dt)

        times = np.arange(steps + 1, dtype=float) * dt
        rec_id = f"synth-{seed}-{rec}"
        for i in range(m):
            positions = hist[:, i].copy()
            neighbors = [
                [(float(hist[k, j, 0]), float(hist[k, j, 1]))
                 for j in range(m) if j != i]
                for k in range(steps + 1)
            ]
            if robot_hist is not None:
                robot_track = [(float(robot_hist[k, 0]), float(robot_hist[k, 1]))
                               for k in range(steps + 1)]
                min_robot = min(
                    math.hypot(positions[k, 0] - robot_track[k][0],
                               positions[k, 1] - robot_track[k][1])
                    for k in range(steps + 1)
                )
            else:
                robot_track = [None] * (steps + 1)
                min_robot = math.inf
            out.append(DatasetTrajectory(
                recording_id=rec_id,
                agent_id=i,
                times=times,
                positions=positions,
                velocities=_finite_difference_velocities(times, positions),
                goal=Vec2(float(goals[i, 0]), float(goals[i, 1])),
                desired_speed=float(speeds[i]),
                neighbors=neighbors,
                robot_track=robot_track,
                klass=kind,
                min_robot_distance=min_robot,
            ))
            if out_path is not None:
                for k in range(steps + 1):
                    all_rows.append((rec_id, i, float(times[k]),
                                     float(positions[k, 0]),
                                     float(positions[k, 1]), False))
        if out_path is not None and robot_hist is not None:
            for k in range(steps + 1):
                all_rows.append((rec_id, 10_000, float(times[k]),
                                 float(robot_hist[k, 0]),
                                 float(robot_hist[k, 1]), True))
    if out_path is not None:
        write_rows(out_path, all_rows, append=append)
    return out


def save_params(params: SrfmParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps({
        "A_p": params.A_p, "B_p": params.B_p, "lam": params.lam,
        "tau": params.tau, "A_r": params.A_r, "B_r": params.B_r,
        "A_o": params.A_o, "B_o": params.B_o,
    }, indent=2) + "\n")


def load_params(path: str | Path) -> SrfmParams:
    return SrfmParams(**json.loads(Path(path).read_text()))
