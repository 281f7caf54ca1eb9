"""Gym-style environment client over the simulator's serve protocol.

All physics and reward semantics live on the simulator side; this client is
a transport shell.  The per-step reward is assembled from the transmitted
components as r_term - k1 * r_dist - k2 * r_div, with k2 = 0 reproducing
the deviation-blind ablation.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .wire import PROTOCOL_VERSION, Channel, TransportError

DEFAULT_SERVE_ARGV = ["srfmbench", "serve", "--stdio"]


class SrfmEnv:
    """reset/step interface to a simulator `serve` endpoint."""

    def __init__(
        self,
        host: Optional[str] = None,
        port: Optional[int] = None,
        spawn_argv: Optional[Sequence[str]] = None,
        scenario_id: str = "random",
        k1: float = 0.1,
        k2: float = 1.0,
        timeout: float = 30.0,
    ) -> None:
        if spawn_argv is not None:
            self._chan = Channel.spawn(list(spawn_argv))
        elif host is not None and port is not None:
            self._chan = Channel.connect(host, port, timeout)
        else:
            self._chan = Channel.spawn(list(DEFAULT_SERVE_ARGV))
        self.scenario_id = scenario_id
        self.k1 = k1
        self.k2 = k2
        self._chan.send({"type": "hello", "version": PROTOCOL_VERSION})
        ack = self._chan.recv()
        if ack.get("type") != "hello_ack":
            raise TransportError(f"expected hello_ack, got {ack.get('type')!r}")
        if ack.get("version") != PROTOCOL_VERSION:
            raise TransportError(f"protocol version mismatch: {ack.get('version')}")
        self.obs_len = int(ack["obs_len"])
        self._step_counter = 0
        self._done = True

    # -- gym-style API -------------------------------------------------------

    def reset(self, seed: int = 0) -> np.ndarray:
        self._chan.send({"type": "reset", "scenario_id": self.scenario_id,
                         "seed": int(seed)})
        obs = self._expect_obs(expected_step=0)
        self._step_counter = 0
        self._done = bool(obs["done"])
        return np.asarray(obs["data"], dtype=np.float32)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self._done:
            raise RuntimeError("episode finished; call reset")
        v, w = float(action[0]), float(action[1])
        self._chan.send({"type": "act", "v": v, "w": w})
        self._step_counter += 1
        obs = self._expect_obs(expected_step=self._step_counter)
        comp = obs["reward_components"]
        reward = (comp["r_term"] - self.k1 * comp["r_dist"]
                  - self.k2 * comp["r_div"])
        self._done = bool(obs["done"])
        info = {"components": comp, "step": obs["step"],
                "episode_id": obs["episode_id"]}
        return (np.asarray(obs["data"], dtype=np.float32), float(reward),
                self._done, info)

    def _expect_obs(self, expected_step: int) -> dict:
        msg = self._chan.recv()
        if msg.get("type") != "obs":
            raise TransportError(f"expected obs, got {msg.get('type')!r}")
        if len(msg["data"]) != self.obs_len:
            raise TransportError(
                f"observation length {len(msg['data'])} != {self.obs_len}")
        if msg["step"] != expected_step:
            raise TransportError(
                f"protocol desync: server step {msg['step']}, "
                f"client step {expected_step}")
        return msg

    def close(self) -> None:
        self._chan.close()

    def __enter__(self) -> "SrfmEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def evaluate(env: SrfmEnv, policy_fn, episodes: int = 20,
             seed_base: int = 10_000, log=None) -> float:
    """Mean episode return of policy_fn(obs) -> (v, w) over held-out seeds."""
    returns = []
    for k in range(episodes):
        obs = env.reset(seed=seed_base + k)
        total = 0.0
        done = False
        while not done:
            obs, reward, done, _ = env.step(policy_fn(obs))
            total += reward
        returns.append(total)
        if log:
            print(f"eval episode {k}: return {total:.2f}", file=log)
    return float(np.mean(returns))
