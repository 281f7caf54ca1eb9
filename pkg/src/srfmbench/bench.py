"""Benchmark campaigns: N seeded twin runs per (scenario, policy), metric
aggregation, significance tests against a reference policy, and report
rendering (CSV, JSON, text table, SVG).

Campaigns are deterministic: run k of every (scenario, policy) cell uses
scenario seed base_seed + k, results are collected in task order regardless
of worker completion order, and the CSV bytes depend only on the inputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import RngStream
from .counterfactual import run_twin
from .metrics import episode_metrics, t_test_independent
from .policies import load_policy_defaults, make_policy
from .protocol import PolicyTransportError
from .scenarios import make_scenario
from .sim import SimConfig

METRIC_COLUMNS = (
    "frechet_mean",
    "frechet_max",
    "min_robot_distance",
    "mean_path_length",
    "mean_traversal_time",
)

#: Metrics aggregated in reports (Table-style: deviation, clearance,
#: path length, traversal time).
TABLE_METRICS = (
    "frechet_mean",
    "min_robot_distance",
    "mean_path_length",
    "mean_traversal_time",
)

MAX_ABORT_FRACTION = 0.10


class CampaignError(RuntimeError):
    def __init__(self, message: str, campaign: Optional["Campaign"] = None):
        super().__init__(message)
        self.campaign = campaign


@dataclass(frozen=True)
class RunRow:
    scenario: str
    policy: str
    run: int
    seed: int
    outcome: str
    aborted: bool
    error: str
    frechet_mean: float
    frechet_max: float
    min_robot_distance: float
    mean_path_length: float
    mean_traversal_time: float


@dataclass
class Campaign:
    scenarios: list[str]
    policies: list[str]
    n_runs: int
    base_seed: int
    reference: str
    rows: list[RunRow]
    representatives: dict[str, dict] = field(default_factory=dict)

    def cell(self, scenario: str, policy: str) -> list[RunRow]:
        return [r for r in self.rows
                if r.scenario == scenario and r.policy == policy and not r.aborted]

    @property
    def aborted_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.aborted for r in self.rows) / len(self.rows)

    def aggregates(self) -> dict:
        out: dict = {}
        for s in self.scenarios:
            out[s] = {}
            for p in self.policies:
                rows = self.cell(s, p)
                cell: dict = {"n": len(rows), "outcomes": {}}
                for name in ("success", "collision", "timeout"):
                    cell["outcomes"][name] = sum(r.outcome == name for r in rows)
                for m in METRIC_COLUMNS:
                    vals = [getattr(r, m) for r in rows]
                    if vals:
                        mean = float(np.mean(vals))
                        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                    else:
                        mean = std = math.nan
                    cell[m] = {"mean": mean, "std": std}
                out[s][p] = cell
        return out

    def significance(self, alpha: float = 0.05) -> dict:
        """Per scenario and metric: each policy tested against the reference
        (equal-variance two-sample t test)."""
        out: dict = {}
        for s in self.scenarios:
            ref_rows = self.cell(s, self.reference)
            out[s] = {}
            for p in self.policies:
                if p == self.reference:
                    continue
                rows = self.cell(s, p)
                out[s][p] = {}
                for m in TABLE_METRICS:
                    a = [getattr(r, m) for r in rows]
                    b = [getattr(r, m) for r in ref_rows]
                    try:
                        t, pv, sig = t_test_independent(a, b, alpha=alpha)
                    except ValueError:
                        t, pv, sig = math.nan, math.nan, False
                    out[s][p][m] = {"t": t, "p": pv, "significant": sig}
        return out

    def to_summary_dict(self) -> dict:
        return {
            "scenarios": self.scenarios,
            "policies": self.policies,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "reference": self.reference,
            "aborted_fraction": self.aborted_fraction,
            "aggregates": self.aggregates(),
            "significance": self.significance(),
        }


def _nan_row(scenario: str, policy: str, run: int, seed: int,
             error: str) -> RunRow:
    return RunRow(scenario, policy, run, seed, "timeout", True, error,
                  math.nan, math.nan, math.nan, math.nan, math.nan)


def split_policy_alias(spec: str) -> tuple[str, str]:
    """Policy entries may read "alias=spec" so one underlying policy can
    appear twice in a campaign under different names."""
    if "=" in spec and not spec.startswith("external:"):
        alias, real = spec.split("=", 1)
        return alias, real
    return spec, spec


def _run_task(task: tuple) -> tuple[RunRow, Optional[dict]]:
    (scenario_name, policy_spec, run_idx, seed, config, n_pedestrians,
     keep_representative, policy_defaults) = task
    scenario = make_scenario(scenario_name, seed, n_pedestrians)
    rng = RngStream(seed, 1)
    policy_name, real_spec = split_policy_alias(policy_spec)
    policy = None
    try:
        policy = make_policy(real_spec)
        twin = run_twin(scenario, policy, config, rng,
                        episode_id=run_idx, policy_defaults=policy_defaults)
    except PolicyTransportError as exc:
        return _nan_row(scenario_name, policy_name, run_idx, seed, str(exc)), None
    finally:
        close = getattr(policy, "close", None)
        if close is not None:
            close()
    m = episode_metrics(twin)
    row = RunRow(
        scenario=scenario_name,
        policy=policy_name,
        run=run_idx,
        seed=seed,
        outcome=m.outcome,
        aborted=False,
        error="",
        frechet_mean=m.frechet_mean,
        frechet_max=m.frechet_max,
        min_robot_distance=m.min_robot_distance,
        mean_path_length=m.mean_path_length,
        mean_traversal_time=m.mean_traversal_time,
    )
    rep = None
    if keep_representative:
        rep = {
            "scenario": scenario_name,
            "bounds": list(twin.factual.scenario.bounds),
            "robot": twin.factual.robot.positions.tolist(),
            "robot_goal": [twin.factual.scenario.robot_goal.x,
                           twin.factual.scenario.robot_goal.y],
            "peds": [
                [pid, f.positions.tolist(), c.positions.tolist()]
                for pid, f, c in twin.pairing
            ],
        }
    return row, rep


def run_campaign(
    scenarios: Sequence[str],
    policies: Sequence[str],
    n_runs: int = 100,
    base_seed: int = 0,
    config: Optional[SimConfig] = None,
    n_pedestrians: int = 10,
    reference: Optional[str] = None,
    workers: Optional[int] = None,
    policy_defaults: Optional[dict] = None,
) -> Campaign:
    """Execute the full (scenario x policy x run) grid of twin runs.

    Aborted runs (policy transport failures) are excluded from aggregates
    and the campaign fails once more than 10% of runs abort.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    scenarios = list(scenarios)
    policies = list(policies)
    if not scenarios or not policies:
        raise ValueError("need at least one scenario and one policy")
    policy_names = [split_policy_alias(p)[0] for p in policies]
    if len(set(policy_names)) != len(policy_names):
        raise ValueError("duplicate policy names; use alias=spec to rename")
    reference = reference if reference is not None else policy_names[0]
    if reference not in policy_names:
        raise ValueError(f"reference policy {reference!r} not in {policy_names}")
    config = config if config is not None else SimConfig()
    if policy_defaults is None:
        policy_defaults = load_policy_defaults()

    tasks = []
    for s in scenarios:
        for p in policies:
            for k in range(n_runs):
                keep = split_policy_alias(p)[0] == reference and k == 0
                tasks.append((s, p, k, base_seed + k, config, n_pedestrians,
                              keep, policy_defaults))

    if workers is None:
        workers = 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]

    rows = []
    representatives: dict[str, dict] = {}
    for row, rep in results:
        rows.append(row)
        if rep is not None and rep["scenario"] not in representatives:
            representatives[rep["scenario"]] = rep

    campaign = Campaign(
        scenarios=scenarios,
        policies=policy_names,
        n_runs=n_runs,
        base_seed=base_seed,
        reference=reference,
        rows=rows,
        representatives=representatives,
    )
    if campaign.aborted_fraction > MAX_ABORT_FRACTION:
        raise CampaignError(
            f"{campaign.aborted_fraction:.0%} of runs aborted "
            f"(limit {MAX_ABORT_FRACTION:.0%})", campaign,
        )
    return campaign


# -- rendering ---------------------------------------------------------------


def rows_csv(campaign: Campaign) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("scenario", "policy", "run", "seed", "outcome", "aborted",
                     "error") + METRIC_COLUMNS)
    for r in campaign.rows:
        writer.writerow([
            r.scenario, r.policy, r.run, r.seed, r.outcome,
            int(r.aborted), r.error,
            r.frechet_mean, r.frechet_max, r.min_robot_distance,
            r.mean_path_length, r.mean_traversal_time,
        ])
    return buf.getvalue()


_METRIC_LABELS = {
    "frechet_mean": "Frechet Dist.",
    "min_robot_distance": "Min. Robot Dist.",
    "mean_path_length": "Traj. Length",
    "mean_traversal_time": "Traj. Time",
}


def table_text(campaign: Campaign) -> str:
    """Plain-text summary table: one row per (scenario, policy), mean +- std
    per metric, '*' marking significance against the reference policy."""
    agg = campaign.aggregates()
    sig = campaign.significance()
    header = ["Scenario", "Policy"] + [_METRIC_LABELS[m] for m in TABLE_METRICS]
    header += ["Succ/Coll/TO"]
    rows = [header]
    for s in campaign.scenarios:
        for p in campaign.policies:
            cell = agg[s][p]
            row = [s, p]
            for m in TABLE_METRICS:
                star = ""
                if p != campaign.reference and sig[s].get(p, {}).get(m, {}).get(
                        "significant"):
                    star = "*"
                row.append(f"{cell[m]['mean']:.2f} +- {cell[m]['std']:.2f}{star}")
            oc = cell["outcomes"]
            row.append(f"{oc['success']}/{oc['collision']}/{oc['timeout']}")
            rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
    return "\n".join(lines) + "\n"


def _svg_escape(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _polyline(points, color: str, width: float = 1.5,
              dashed: bool = False) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = ' stroke-dasharray="4 3"' if dashed else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash}/>')


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def scenario_svg(campaign: Campaign, scenario: str) -> str:
    """Trajectory overlay of the representative twin run (factual solid,
    counterfactual dashed, robot in black) plus a deviation bar chart."""
    rep = campaign.representatives.get(scenario)
    agg = campaign.aggregates()[scenario]
    size = 420.0
    chart_h = 160.0
    xmin, ymin, xmax, ymax = rep["bounds"] if rep else (-7.5, -7.5, 7.5, 7.5)
    scale = size / max(xmax - xmin, ymax - ymin)

    def to_px(p):
        return ((p[0] - xmin) * scale, (ymax - p[1]) * scale)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size + chart_h:.0f}" '
        f'viewBox="0 0 {size:.0f} {size + chart_h:.0f}">',
        f'<rect x="0" y="0" width="{size:.0f}" height="{size:.0f}" '
        'fill="#fafafa" stroke="#cccccc"/>',
        f'<text x="8" y="16" font-size="13">{_svg_escape(scenario)}</text>',
    ]
    if rep:
        for idx, (pid, fact, cf) in enumerate(rep["peds"]):
            color = _PALETTE[idx % len(_PALETTE)]
            parts.append(_polyline([to_px(p) for p in cf], color, 1.0, dashed=True))
            parts.append(_polyline([to_px(p) for p in fact], color, 1.4))
        parts.append(_polyline([to_px(p) for p in rep["robot"]], "#000000", 2.0))
        gx, gy = to_px(rep["robot_goal"])
        parts.append(f'<circle cx="{gx:.2f}" cy="{gy:.2f}" r="5" fill="none" '
                     'stroke="#000000" stroke-width="1.5"/>')

    # deviation bars
    n = len(campaign.policies)
    bar_w = size / max(n, 1) * 0.6
    gap = size / max(n, 1)
    means = [agg[p]["frechet_mean"]["mean"] for p in campaign.policies]
    finite = [m for m in means if not math.isnan(m)]
    top = max(finite) if finite else 1.0
    top = top if top > 0 else 1.0
    base_y = size + chart_h - 30.0
    for i, (p, m) in enumerate(zip(campaign.policies, means)):
        h = 0.0 if math.isnan(m) else (m / top) * (chart_h - 50.0)
        x = gap * i + (gap - bar_w) / 2.0
        parts.append(f'<rect x="{x:.2f}" y="{base_y - h:.2f}" '
                     f'width="{bar_w:.2f}" height="{h:.2f}" fill="#4878a8"/>')
        label = _svg_escape(p if len(p) <= 14 else p[:11] + "...")
        parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{base_y + 14:.2f}" '
                     f'font-size="10" text-anchor="middle">{label}</text>')
        value = "n/a" if math.isnan(m) else f"{m:.2f}"
        parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{base_y - h - 4:.2f}" '
                     f'font-size="10" text-anchor="middle">{value}</text>')
    parts.append(f'<text x="8" y="{size + 16:.2f}" font-size="11">'
                 'mean trajectory deviation (m)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_report(campaign: Campaign, outdir: str | Path) -> dict[str, Path]:
    """Write runs.csv, summary.json, table.txt, and one SVG per scenario."""
    if not campaign.rows:
        raise ValueError("empty campaign")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["csv"] = outdir / "runs.csv"
    paths["csv"].write_text(rows_csv(campaign))
    paths["json"] = outdir / "summary.json"
    paths["json"].write_text(json.dumps(campaign.to_summary_dict(), indent=2,
                                        sort_keys=True) + "\n")
    paths["table"] = outdir / "table.txt"
    paths["table"].write_text(table_text(campaign))
    for s in campaign.scenarios:
        p = outdir / f"scenario_{s}.svg"
        p.write_text(scenario_svg(campaign, s))
        paths[f"svg_{s}"] = p
    return paths
