"""TD3 training against a simulator serve endpoint.

Defaults follow the target setup: learning rate 1e-4, replay buffer 1e6,
episodes of up to 750 steps on the random training scenario, up to 2e6
environment steps.  `--ablate-div` zeroes the deviation penalty weight so
the agent still avoids pedestrians (collision penalty) but gets no signal
about the trajectory deviation it causes.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .client import DEFAULT_SERVE_ARGV, SrfmEnv
from .td3 import TD3Agent, TD3Config


def train(
    env: SrfmEnv,
    total_steps: int = 2_000_000,
    start_steps: int = 1_000,
    checkpoint_dir: str | Path = "checkpoints",
    checkpoint_every: int = 50_000,
    seed: int = 0,
    log=sys.stderr,
) -> Path:
    """Run the training loop; returns the final checkpoint path."""
    agent = TD3Agent(TD3Config(), seed=seed)
    outdir = Path(checkpoint_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    episode_seed = seed
    obs = env.reset(seed=episode_seed)
    episode_return = 0.0
    episode_steps = 0
    episodes = 0
    t_start = time.monotonic()

    for t in range(total_steps):
        if t < start_steps:
            action = agent.random_action()
        else:
            action = agent.act(obs, noisy=True)
        next_obs, reward, done, _ = env.step(action)
        agent.buffer.add(obs, action, reward, next_obs, float(done))
        episode_return += reward
        episode_steps += 1
        obs = next_obs

        if t >= start_steps:
            agent.train_step()

        if done:
            episodes += 1
            if log:
                print(f"episode {episodes} (step {t + 1}): return "
                      f"{episode_return:.2f} in {episode_steps} steps",
                      file=log, flush=True)
            episode_seed += 1
            obs = env.reset(seed=episode_seed)
            episode_return = 0.0
            episode_steps = 0

        if (t + 1) % checkpoint_every == 0:
            agent.save(outdir / f"td3_{t + 1}.pt")
            agent.export_actor_npz(outdir / f"actor_{t + 1}.npz")

    final_pt = outdir / "td3_final.pt"
    agent.save(final_pt)
    agent.export_actor_npz(outdir / "actor_final.npz")
    if log:
        print(f"trained {total_steps} steps ({episodes} episodes) in "
              f"{time.monotonic() - t_start:.0f}s -> {final_pt}", file=log)
    return final_pt


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", help="connect to a running serve endpoint")
    parser.add_argument("--port", type=int)
    parser.add_argument("--spawn", action="store_true",
                        help="spawn the simulator as a subprocess (stdio)")
    parser.add_argument("--serve-arg", action="append", default=[],
                        help="extra argument for the spawned simulator")
    parser.add_argument("--scenario", default="random")
    parser.add_argument("--steps", type=int, default=2_000_000)
    parser.add_argument("--start-steps", type=int, default=1_000)
    parser.add_argument("--checkpoint-dir", default="checkpoints")
    parser.add_argument("--checkpoint-every", type=int, default=50_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--k1", type=float, default=0.1)
    parser.add_argument("--k2", type=float, default=1.0)
    parser.add_argument("--ablate-div", action="store_true",
                        help="train the deviation-blind baseline (k2 = 0)")
    args = parser.parse_args(argv)

    k2 = 0.0 if args.ablate_div else args.k2
    spawn_argv = None
    if args.spawn or args.host is None:
        spawn_argv = DEFAULT_SERVE_ARGV + list(args.serve_arg)
    env = SrfmEnv(host=args.host, port=args.port, spawn_argv=spawn_argv,
                  scenario_id=args.scenario, k1=args.k1, k2=k2)
    try:
        train(env, total_steps=args.steps, start_steps=args.start_steps,
              checkpoint_dir=args.checkpoint_dir,
              checkpoint_every=args.checkpoint_every, seed=args.seed)
    finally:
        env.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
