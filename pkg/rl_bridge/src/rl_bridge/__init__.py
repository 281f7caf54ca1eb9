"""RL bridge: gym-style client for the crowd-simulator serve protocol, TD3
training, and an action server that plugs trained policies back into the
simulator's benchmark as external policies."""

__version__ = "0.1.0"

from .client import SrfmEnv, evaluate
from .td3 import TD3Agent, TD3Config

__all__ = ["SrfmEnv", "evaluate", "TD3Agent", "TD3Config"]
