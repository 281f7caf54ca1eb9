"""Command-line entry point.

Subcommands: simulate, twin, fit, ade, bench, replay, serve.  Config
precedence: explicit flags > SRFMBENCH_CONFIG env file > --config file >
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from .bench import CampaignError, render_report, run_campaign, scenario_svg
from .core import RngStream
from .counterfactual import run_twin, save_twin, step_reward
from .fitting import (
    MODES,
    PEDESTRIAN_STAGE,
    ROBOT_STAGE,
    evaluate_ade,
    fit,
    ingest,
    load_params,
    save_params,
)
from .forces import SrfmParams
from .metrics import episode_metrics, min_robot_distance
from .policies import OBS_LEN, Action, make_policy
from .protocol import PROTOCOL_VERSION, MessageStream, PolicyTransportError
from .scenarios import EVALUATION_SCENARIOS, GENERATORS, Scenario, make_scenario
from .sim import EpisodeRecord, SimConfig, Simulation, run_episode


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _load_config(args: argparse.Namespace) -> SimConfig:
    data: dict = {}
    for source in (os.environ.get("SRFMBENCH_CONFIG"),
                   getattr(args, "config", None)):
        if source:
            data.update(json.loads(Path(source).read_text()))
    if "params" in data and isinstance(data["params"], dict):
        data["params"] = SrfmParams(**data["params"])
    config = SimConfig(**{k: v for k, v in data.items()
                          if k in SimConfig.__dataclass_fields__})
    overrides = {}
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if getattr(args, "max_steps", None) is not None:
        overrides["max_steps"] = args.max_steps
    if getattr(args, "params", None):
        overrides["params"] = load_params(args.params)
    if getattr(args, "k1", None) is not None:
        overrides["k1"] = args.k1
    if getattr(args, "k2", None) is not None:
        overrides["k2"] = args.k2
    return replace(config, **overrides) if overrides else config


def _load_scenario(args: argparse.Namespace) -> Scenario:
    if getattr(args, "scenario_file", None):
        return Scenario.load(args.scenario_file)
    if not getattr(args, "scenario", None):
        raise ValueError("provide --scenario or --scenario-file")
    return make_scenario(args.scenario, args.seed, args.n_pedestrians)


def _add_common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--config", help="JSON file with simulation config fields")
    p.add_argument("--params", help="JSON file with force parameters")
    p.add_argument("--dt", type=float, help="integration step (s)")
    p.add_argument("--max-steps", type=int, help="episode step budget")
    if scenario:
        p.add_argument("--scenario", choices=sorted(GENERATORS),
                       help="named scenario generator")
        p.add_argument("--scenario-file", help="scenario JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--n-pedestrians", type=int, default=10)


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    scenario = _load_scenario(args)
    policy = make_policy(args.policy)
    try:
        record = run_episode(scenario, policy, config, RngStream(args.seed, 1))
    finally:
        close = getattr(policy, "close", None)
        if close:
            close()
    record.save(args.out)
    print(f"outcome={record.outcome} steps={record.n_steps} "
          f"min_robot_distance={min_robot_distance(record):.3f} -> {args.out}")
    return 0


def _cmd_twin(args: argparse.Namespace) -> int:
    config = _load_config(args)
    scenario = _load_scenario(args)
    policy = make_policy(args.policy)
    try:
        twin = run_twin(scenario, policy, config, RngStream(args.seed, 1),
                        mode=args.counterfactual)
    finally:
        close = getattr(policy, "close", None)
        if close:
            close()
    m = episode_metrics(twin)
    print(f"frechet_mean={m.frechet_mean:.4f} "
          f"min_robot_distance={m.min_robot_distance:.4f} "
          f"mean_path_length={m.mean_path_length:.4f} "
          f"mean_traversal_time={m.mean_traversal_time:.4f} "
          f"outcome={m.outcome}")
    if args.out_dir:
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_twin(twin, outdir / "factual.jsonl",
                  outdir / "counterfactual.jsonl", outdir / "pairing.json")
        (outdir / "metrics.json").write_text(json.dumps({
            "scenario": m.scenario_id, "seed": m.seed, "outcome": m.outcome,
            "frechet_mean": m.frechet_mean, "frechet_max": m.frechet_max,
            "min_robot_distance": m.min_robot_distance,
            "mean_path_length": m.mean_path_length,
            "mean_traversal_time": m.mean_traversal_time,
            "frechet_per_ped": {str(k): v for k, v in m.frechet_per_ped.items()},
        }, indent=2) + "\n")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    trajectories = ingest(args.infile)
    stage = PEDESTRIAN_STAGE if args.stage == "pedestrian" else ROBOT_STAGE
    init = load_params(args.init) if args.init else None
    base = load_params(args.base_params) if args.base_params else None
    result = fit(trajectories, stage, init=init, base_params=base,
                 freeze=tuple(args.freeze))
    save_params(result.params, args.out)
    flat = {n: getattr(result.params, n) for n in result.fitted_names}
    print(f"stage={args.stage} converged={result.converged} "
          f"iterations={result.iterations} residual={result.residual:.6e}")
    print(" ".join(f"{k}={v:.4f}" for k, v in flat.items()))
    return 0 if result.converged else 1


def _cmd_ade(args: argparse.Namespace) -> int:
    trajectories = ingest(args.infile)
    wanted = None
    if args.trajectory_class != "all":
        wanted = args.trajectory_class
        trajectories = [t for t in trajectories if t.klass == wanted]
    params = load_params(args.params) if args.params else SrfmParams()
    value = evaluate_ade(trajectories, params, args.mode)
    print(f"ade={value:.4f} mode={args.mode} n={len(trajectories)}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _load_config(args)
    scenarios = [s.strip() for s in args.scenarios.split(",") if s.strip()]
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    try:
        campaign = run_campaign(
            scenarios, policies, n_runs=args.runs, base_seed=args.seed,
            config=config, n_pedestrians=args.n_pedestrians,
            reference=args.reference, workers=args.workers,
        )
    except CampaignError as exc:
        if exc.campaign is not None and args.out:
            render_report(exc.campaign, args.out)
        return _fail(str(exc))
    if args.out:
        paths = render_report(campaign, args.out)
        print(f"report written to {paths['csv'].parent}")
    from .bench import table_text

    print(table_text(campaign), end="")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    record = EpisodeRecord.load(args.record)
    print(f"scenario={record.scenario.id} seed={record.scenario.seed} "
          f"outcome={record.outcome} steps={record.n_steps} "
          f"duration={record.end_time:.1f}s "
          f"min_robot_distance={min_robot_distance(record):.3f}")
    for e in record.events:
        agent = "" if e.agent is None else f" agent={e.agent}"
        print(f"  t={e.t:.1f} {e.kind}{agent}")
    if args.svg:
        _record_svg(record, args.svg)
        print(f"svg -> {args.svg}")
    return 0


def _record_svg(record: EpisodeRecord, path: str) -> None:
    from .bench import Campaign, RunRow  # reuse the renderer

    rep = {
        "scenario": record.scenario.id,
        "bounds": list(record.scenario.bounds),
        "robot": record.robot.positions.tolist(),
        "robot_goal": [record.scenario.robot_goal.x, record.scenario.robot_goal.y],
        "peds": [
            [pid, traj.positions.tolist(), traj.positions.tolist()]
            for pid, traj in sorted(record.pedestrians.items())
        ],
    }
    campaign = Campaign(
        scenarios=[record.scenario.id], policies=["recorded"], n_runs=1,
        base_seed=record.scenario.seed, reference="recorded",
        rows=[RunRow(record.scenario.id, "recorded", 0, record.scenario.seed,
                     record.outcome, False, "", 0.0, 0.0,
                     min_robot_distance(record), 0.0, 0.0)],
        representatives={record.scenario.id: rep},
    )
    Path(path).write_text(scenario_svg(campaign, record.scenario.id))


class _EpisodeSession:
    """One learner connection in serve mode: reset/act in, obs/reward out."""

    def __init__(self, stream: MessageStream, config: SimConfig,
                 scenario_file: Optional[str], n_pedestrians: int) -> None:
        self.stream = stream
        self.config = config
        self.scenario_file = scenario_file
        self.n_pedestrians = n_pedestrians
        self.sim: Optional[Simulation] = None
        self.episode_id = -1
        self.last_action = Action(0.0, 0.0)

    def handshake(self) -> None:
        hello = self.stream.recv()
        if hello.get("type") != "hello":
            raise PolicyTransportError("expected hello")
        if hello.get("version") != PROTOCOL_VERSION:
            self.stream.send({"type": "error",
                              "message": f"unsupported protocol version "
                                         f"{hello.get('version')}"})
            raise PolicyTransportError("protocol version mismatch")
        self.stream.send({"type": "hello_ack", "version": PROTOCOL_VERSION,
                          "obs_len": OBS_LEN})

    def _send_obs(self) -> None:
        sim = self.sim
        done = sim.done
        total, components = step_reward(sim) if sim.k > 0 else (0.0, {
            "r_term": 0.0, "r_dist": 0.0, "r_div": 0.0})
        obs = sim.observation(self.last_action,
                              success=sim.outcome == "success",
                              terminated=done)
        self.stream.send({
            "type": "obs",
            "episode_id": self.episode_id,
            "step": sim.k,
            "data": obs.to_vector(),
            "reward_components": components,
            "done": done,
        })

    def run(self) -> None:
        self.handshake()
        while True:
            msg = self.stream.recv()
            kind = msg.get("type")
            if kind == "reset":
                seed = int(msg.get("seed", 0))
                if self.scenario_file:
                    scenario = Scenario.load(self.scenario_file)
                else:
                    scenario_id = msg.get("scenario_id") or "random"
                    scenario = make_scenario(scenario_id, seed,
                                             self.n_pedestrians)
                self.episode_id += 1
                self.last_action = Action(0.0, 0.0)
                self.sim = Simulation(scenario, self.config,
                                      RngStream(seed, 1))
                self._send_obs()
            elif kind == "act":
                if self.sim is None or self.sim.done:
                    self.stream.send({"type": "error",
                                      "message": "act outside a live episode"})
                    raise PolicyTransportError("act outside a live episode")
                action = Action(float(msg["v"]), float(msg["w"]))
                self.sim.step(action)
                self.last_action = action
                self._send_obs()
            else:
                self.stream.send({"type": "error",
                                  "message": f"unexpected message {kind!r}"})
                raise PolicyTransportError(f"unexpected message {kind!r}")


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.stdio:
        stream = MessageStream(sys.stdin.buffer, sys.stdout.buffer)
        session = _EpisodeSession(stream, config, args.scenario_file,
                                  args.n_pedestrians)
        try:
            session.run()
        except PolicyTransportError:
            pass
        return 0
    server = socket.create_server((args.host, args.port))
    actual_port = server.getsockname()[1]
    print(f"serving on {args.host}:{actual_port}", flush=True)
    try:
        while True:
            conn, _ = server.accept()
            stream = MessageStream.from_socket(conn, timeout=args.timeout)
            session = _EpisodeSession(stream, config, args.scenario_file,
                                      args.n_pedestrians)
            try:
                session.run()
            except PolicyTransportError:
                pass
            finally:
                stream.close()
            if args.once:
                break
    finally:
        server.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srfmbench",
        description="Crowd simulation and counterfactual navigation benchmark",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write a record")
    _add_common(p)
    p.add_argument("--policy", default="goal_seek")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("twin", help="one twin run, print the four metrics")
    _add_common(p)
    p.add_argument("--policy", default="goal_seek")
    p.add_argument("--counterfactual", choices=("replay", "remove"),
                   default="replay")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_twin)

    p = sub.add_parser("fit", help="fit force parameters from trajectories")
    p.add_argument("--stage", choices=("pedestrian", "robot"), required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="JSON params file used as starting point")
    p.add_argument("--base-params",
                   help="JSON params file supplying the frozen values")
    p.add_argument("--freeze", action="append", default=[],
                   help="parameter name to hold fixed (repeatable)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("ade", help="rollout prediction error on a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--params")
    p.add_argument("--mode", choices=MODES, default="robot_force")
    p.add_argument("--trajectory-class",
                   choices=("interaction", "non_interaction", "all"),
                   default="all")
    p.set_defaults(func=_cmd_ade)

    p = sub.add_parser("bench", help="run a benchmark campaign")
    p.add_argument("--scenarios", default=",".join(EVALUATION_SCENARIOS))
    p.add_argument("--policies", default="goal_seek,dwa,vo")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--reference")
    p.add_argument("--n-pedestrians", type=int, default=10)
    p.add_argument("--config")
    p.add_argument("--params")
    p.add_argument("--dt", type=float)
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("replay", help="inspect a record file")
    p.add_argument("record")
    p.add_argument("--svg")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="host the simulator for an RL learner")
    _add_common(p, scenario=False)
    p.add_argument("--scenario-file",
                   help="serve this fixed scenario instead of generators")
    p.add_argument("--n-pedestrians", type=int, default=10)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--stdio", action="store_true")
    p.add_argument("--once", action="store_true",
                   help="exit after the first connection closes")
    p.add_argument("--timeout", type=float, default=300.0)
    p.add_argument("--k1", type=float)
    p.add_argument("--k2", type=float)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError,
            PolicyTransportError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
