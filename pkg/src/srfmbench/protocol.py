"""Newline-delimited JSON wire protocol shared by the external-policy
adapter, the `serve` subcommand, and clients on the other side.

Messages (one JSON object per line):

    hello     {"type": "hello", "version": 1, "obs_len": 36}
    hello_ack {"type": "hello_ack", "version": 1, "obs_len": 36}
    reset     {"type": "reset", "scenario_id": str, "seed": int}
    obs       {"type": "obs", "episode_id": int, "step": int,
               "data": [float, ...],
               "reward_components": {"r_term": f, "r_dist": f, "r_div": f},
               "done": bool}
    act       {"type": "act", "v": float, "w": float}
    error     {"type": "error", "message": str}

The connecting side always speaks first.  Floats are serialized with 17
significant digits so every double round-trips exactly.
"""

from __future__ import annotations

import json
import math
import socket
import subprocess
from typing import IO, Optional

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 5.0


class ProtocolError(RuntimeError):
    """Handshake or message-schema violation."""


class PolicyTransportError(RuntimeError):
    """Transport failure (timeout, disconnect, malformed message); any
    episode in flight must abort rather than produce a partial record."""


def dumps_wire(obj) -> str:
    """Serialize a message with fixed float formatting (17 significant
    digits) and deterministic key order (insertion order)."""
    parts: list[str] = []
    _encode(obj, parts)
    return "".join(parts)


def _encode(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, int):
        parts.append(repr(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("wire messages must contain finite floats")
        parts.append(format(obj, ".17g"))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(k)))
            parts.append(":")
            _encode(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(",")
            _encode(v, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} on the wire")


class MessageStream:
    """Line-framed message channel over a socket or a file-object pair."""

    def __init__(
        self,
        reader: IO[bytes],
        writer: IO[bytes],
        sock: Optional[socket.socket] = None,
        proc: Optional[subprocess.Popen] = None,
    ) -> None:
        self._reader = reader
        self._writer = writer
        self._sock = sock
        self._proc = proc

    @staticmethod
    def connect_tcp(host: str, port: int,
                    timeout: float = DEFAULT_TIMEOUT) -> "MessageStream":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise PolicyTransportError(f"connect to {host}:{port} failed: {exc}")
        sock.settimeout(timeout)
        return MessageStream(sock.makefile("rb"), sock.makefile("wb"), sock=sock)

    @staticmethod
    def from_socket(sock: socket.socket,
                    timeout: Optional[float] = DEFAULT_TIMEOUT) -> "MessageStream":
        sock.settimeout(timeout)
        return MessageStream(sock.makefile("rb"), sock.makefile("wb"), sock=sock)

    @staticmethod
    def spawn(argv: list[str]) -> "MessageStream":
        """Subprocess transport over stdin/stdout (no per-read timeout)."""
        try:
            proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                    stdout=subprocess.PIPE)
        except OSError as exc:
            raise PolicyTransportError(f"spawn {argv[0]!r} failed: {exc}")
        return MessageStream(proc.stdout, proc.stdin, proc=proc)

    def send(self, obj: dict) -> None:
        try:
            self._writer.write(dumps_wire(obj).encode("utf-8") + b"\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise PolicyTransportError(f"send failed: {exc}")

    def recv(self) -> dict:
        try:
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise PolicyTransportError(f"receive failed: {exc}")
        if not line:
            raise PolicyTransportError("peer closed the connection")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PolicyTransportError(f"malformed message: {exc}")
        if not isinstance(msg, dict) or "type" not in msg:
            raise PolicyTransportError("message is not an object with a type")
        if msg["type"] == "error":
            raise PolicyTransportError(f"peer error: {msg.get('message')}")
        return msg

    def expect(self, msg_type: str) -> dict:
        msg = self.recv()
        if msg["type"] != msg_type:
            raise ProtocolError(f"expected {msg_type!r}, got {msg['type']!r}")
        return msg

    def close(self) -> None:
        for f in (self._writer, self._reader):
            try:
                f.close()
            except OSError:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=2.0)
            except Exception:
                self._proc.kill()
