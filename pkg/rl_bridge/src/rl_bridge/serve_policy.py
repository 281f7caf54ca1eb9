"""Action server: serves a trained actor over the external-policy protocol.

Loads either a torch checkpoint (.pt) or the framework-neutral .npz actor
export (numpy-only forward pass, no torch needed at serve time).  Handles
concurrent connections so a benchmark worker pool can query it in parallel.
"""

from __future__ import annotations

import argparse
import socket
import sys
import threading
from pathlib import Path

import numpy as np

from .td3 import actor_forward_npz
from .wire import PROTOCOL_VERSION, Channel, TransportError


class NpzActor:
    def __init__(self, path: str | Path):
        data = np.load(path)
        self.weights = {k: data[k] for k in ("w1", "b1", "w2", "b2",
                                             "w3", "b3", "scale")}

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return actor_forward_npz(self.weights, obs)


class TorchActor:
    def __init__(self, path: str | Path):
        from .td3 import TD3Agent

        self.agent = TD3Agent()
        self.agent.load(path)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return self.agent.act(obs.astype(np.float32), noisy=False)


def load_actor(path: str | Path):
    path = Path(path)
    if path.suffix == ".npz":
        return NpzActor(path)
    return TorchActor(path)


def _serve_connection(conn: socket.socket, actor, obs_len: int) -> None:
    chan = Channel(conn.makefile("rb"), conn.makefile("wb"), sock=conn)
    try:
        hello = chan.recv()
        if hello.get("type") != "hello":
            raise TransportError("expected hello")
        if hello.get("version") != PROTOCOL_VERSION:
            chan.send({"type": "error",
                       "message": f"unsupported version {hello.get('version')}"})
            return
        if hello.get("obs_len") != obs_len:
            chan.send({"type": "error",
                       "message": f"expected obs_len {obs_len}"})
            return
        chan.send({"type": "hello_ack", "version": PROTOCOL_VERSION})
        while True:
            msg = chan.recv()
            if msg["type"] == "reset":
                continue  # the actor is stateless
            if msg["type"] != "obs":
                chan.send({"type": "error",
                           "message": f"unexpected message {msg['type']!r}"})
                return
            action = actor(np.asarray(msg["data"], dtype=np.float64))
            chan.send({"type": "act", "v": float(action[0]),
                       "w": float(action[1])})
    except TransportError:
        pass
    finally:
        chan.close()


def serve(checkpoint: str | Path, host: str = "127.0.0.1", port: int = 0,
          obs_len: int = 36, ready_fp=sys.stdout) -> None:
    actor = load_actor(checkpoint)
    server = socket.create_server((host, port))
    actual = server.getsockname()[1]
    print(f"serving policy on {host}:{actual}", file=ready_fp, flush=True)
    try:
        while True:
            conn, _ = server.accept()
            threading.Thread(target=_serve_connection,
                             args=(conn, actor, obs_len), daemon=True).start()
    finally:
        server.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    args = parser.parse_args(argv)
    serve(args.checkpoint, args.host, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
