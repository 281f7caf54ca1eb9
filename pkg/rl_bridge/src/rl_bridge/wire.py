"""Minimal newline-delimited-JSON transport for the simulator protocol.

The bridge deliberately has no dependency on the simulator package; this is
its own small implementation of the documented wire format (one JSON object
per line, floats with 17 significant digits, connecting side speaks first).
"""

from __future__ import annotations

import json
import math
import socket
import subprocess
from typing import IO, Optional

PROTOCOL_VERSION = 1


class TransportError(RuntimeError):
    pass


def dumps(obj) -> str:
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
            raise ValueError("non-finite float on the wire")
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
        raise TypeError(f"cannot serialize {type(obj).__name__}")


class Channel:
    """Line-framed message channel over TCP or a subprocess's stdio."""

    def __init__(self, reader: IO[bytes], writer: IO[bytes],
                 sock: Optional[socket.socket] = None,
                 proc: Optional[subprocess.Popen] = None) -> None:
        self._reader = reader
        self._writer = writer
        self._sock = sock
        self._proc = proc

    @staticmethod
    def connect(host: str, port: int, timeout: float = 30.0) -> "Channel":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"connect to {host}:{port} failed: {exc}")
        sock.settimeout(timeout)
        return Channel(sock.makefile("rb"), sock.makefile("wb"), sock=sock)

    @staticmethod
    def spawn(argv: list[str]) -> "Channel":
        try:
            proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                    stdout=subprocess.PIPE)
        except OSError as exc:
            raise TransportError(f"spawn {argv!r} failed: {exc}")
        return Channel(proc.stdout, proc.stdin, proc=proc)

    def send(self, obj: dict) -> None:
        try:
            self._writer.write(dumps(obj).encode("utf-8") + b"\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"send failed: {exc}")

    def recv(self) -> dict:
        try:
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"receive failed: {exc}")
        if not line:
            raise TransportError("peer closed the connection")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TransportError(f"malformed message: {exc}")
        if not isinstance(msg, dict) or "type" not in msg:
            raise TransportError("message is not a typed object")
        if msg["type"] == "error":
            raise TransportError(f"peer error: {msg.get('message')}")
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
