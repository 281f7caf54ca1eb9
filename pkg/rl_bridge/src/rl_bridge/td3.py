"""Twin-delayed DDPG (TD3) on torch, sized for the simulator's observation
and action spaces.

Network sizes follow the common two-hidden-layer 256-unit setup; the
remaining hyperparameters default to the algorithm's canonical values.
Checkpoints are saved in torch's native format plus a framework-neutral
.npz export of the actor that the action server can run on numpy alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

OBS_DIM = 36
ACT_DIM = 2
ACTION_SCALE = (0.5, math.pi)  # |v| and |w| bounds


@dataclass
class TD3Config:
    lr: float = 1e-4
    buffer_size: int = 1_000_000
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    exploration_noise: float = 0.1
    hidden: int = 256
    action_scale: tuple = ACTION_SCALE


class Actor(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden: int, scale):
        super().__init__()
        self.l1 = nn.Linear(obs_dim, hidden)
        self.l2 = nn.Linear(hidden, hidden)
        self.l3 = nn.Linear(hidden, act_dim)
        self.register_buffer("scale", torch.tensor(scale, dtype=torch.float32))

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.l1(obs))
        x = F.relu(self.l2(x))
        return torch.tanh(self.l3(x)) * self.scale


class Critic(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden: int):
        super().__init__()
        self.q1_net = nn.Sequential(
            nn.Linear(obs_dim + act_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 1),
        )
        self.q2_net = nn.Sequential(
            nn.Linear(obs_dim + act_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 1),
        )

    def forward(self, obs, act):
        x = torch.cat([obs, act], dim=1)
        return self.q1_net(x), self.q2_net(x)

    def q1(self, obs, act):
        return self.q1_net(torch.cat([obs, act], dim=1))


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros((capacity, 1), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros((capacity, 1), dtype=np.float32)
        self.index = 0
        self.size = 0

    def add(self, obs, act, reward, next_obs, done):
        i = self.index
        self.obs[i] = obs
        self.act[i] = act
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.index = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        t = torch.from_numpy
        return (t(self.obs[idx]), t(self.act[idx]), t(self.reward[idx]),
                t(self.next_obs[idx]), t(self.done[idx]))


class TD3Agent:
    def __init__(self, config: TD3Config = TD3Config(), seed: int = 0):
        torch.manual_seed(seed)
        self.config = config
        self.rng = np.random.default_rng(seed)
        c = config
        self.actor = Actor(OBS_DIM, ACT_DIM, c.hidden, c.action_scale)
        self.actor_target = Actor(OBS_DIM, ACT_DIM, c.hidden, c.action_scale)
        self.actor_target.load_state_dict(self.actor.state_dict())
        self.critic = Critic(OBS_DIM, ACT_DIM, c.hidden)
        self.critic_target = Critic(OBS_DIM, ACT_DIM, c.hidden)
        self.critic_target.load_state_dict(self.critic.state_dict())
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=c.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=c.lr)
        self.buffer = ReplayBuffer(c.buffer_size, OBS_DIM, ACT_DIM)
        self.scale = np.array(c.action_scale, dtype=np.float32)
        self.updates = 0

    def act(self, obs: np.ndarray, noisy: bool = False) -> np.ndarray:
        with torch.no_grad():
            a = self.actor(torch.from_numpy(obs).float().unsqueeze(0))
        a = a.squeeze(0).numpy()
        if noisy:
            a = a + self.rng.normal(0.0, self.config.exploration_noise,
                                    ACT_DIM) * self.scale
        return np.clip(a, -self.scale, self.scale).astype(np.float32)

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(-self.scale, self.scale).astype(np.float32)

    def train_step(self) -> None:
        c = self.config
        if self.buffer.size < c.batch_size:
            return
        obs, act, reward, next_obs, done = self.buffer.sample(c.batch_size,
                                                              self.rng)
        with torch.no_grad():
            scale = torch.tensor(self.scale)
            noise = (torch.randn_like(act) * c.policy_noise
                     ).clamp(-c.noise_clip, c.noise_clip) * scale
            next_act = (self.actor_target(next_obs) + noise
                        ).clamp(-scale, scale)
            q1_t, q2_t = self.critic_target(next_obs, next_act)
            target = reward + (1.0 - done) * c.gamma * torch.min(q1_t, q2_t)
        q1, q2 = self.critic(obs, act)
        critic_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        self.updates += 1
        if self.updates % c.policy_delay == 0:
            actor_loss = -self.critic.q1(obs, self.actor(obs)).mean()
            self.actor_opt.zero_grad()
            actor_loss.backward()
            self.actor_opt.step()
            self._soft_update(self.actor, self.actor_target)
            self._soft_update(self.critic, self.critic_target)

    def _soft_update(self, net: nn.Module, target: nn.Module) -> None:
        tau = self.config.tau
        with torch.no_grad():
            for p, tp in zip(net.parameters(), target.parameters()):
                tp.mul_(1.0 - tau).add_(tau * p)

    # -- checkpointing -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        torch.save({
            "actor": self.actor.state_dict(),
            "critic": self.critic.state_dict(),
            "actor_target": self.actor_target.state_dict(),
            "critic_target": self.critic_target.state_dict(),
            "updates": self.updates,
            "action_scale": list(self.config.action_scale),
        }, path)

    def load(self, path: str | Path) -> None:
        state = torch.load(path, map_location="cpu", weights_only=True)
        self.actor.load_state_dict(state["actor"])
        self.critic.load_state_dict(state["critic"])
        self.actor_target.load_state_dict(state["actor_target"])
        self.critic_target.load_state_dict(state["critic_target"])
        self.updates = int(state["updates"])

    def export_actor_npz(self, path: str | Path) -> None:
        """Framework-neutral actor weights for the numpy action server."""
        sd = {k: v.detach().numpy() for k, v in self.actor.state_dict().items()}
        np.savez(
            path,
            w1=sd["l1.weight"], b1=sd["l1.bias"],
            w2=sd["l2.weight"], b2=sd["l2.bias"],
            w3=sd["l3.weight"], b3=sd["l3.bias"],
            scale=np.asarray(self.config.action_scale, dtype=np.float64),
        )


def actor_forward_npz(weights: dict, obs: np.ndarray) -> np.ndarray:
    """Numpy-only forward pass matching Actor.forward."""
    x = np.maximum(obs @ weights["w1"].T + weights["b1"], 0.0)
    x = np.maximum(x @ weights["w2"].T + weights["b2"], 0.0)
    return np.tanh(x @ weights["w3"].T + weights["b3"]) * weights["scale"]
