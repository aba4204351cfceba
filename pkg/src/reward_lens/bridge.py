"""Evaluate rewards held by an external process over a line protocol.

The child greets with ``HELLO reward-bridge v1``.  Each request is one line
``EVAL <s> <a> <s_next>`` (compact JSON values) and each response is one
decimal float on its own line, in request order.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from typing import Sequence

import numpy as np

from .env import Transitions
from .errors import BridgeError, InputError
from .rewards import RewardSource

HANDSHAKE = "HELLO reward-bridge v1"
# Requests in flight before responses are drained; keeps both pipes well
# below their buffer limits.
CHUNK = 256


def _json(x) -> str:
    return json.dumps(np.asarray(x).tolist(), separators=(",", ":"))


def encode_request(s, a, s_next) -> str:
    return f"EVAL {_json(s)} {_json(a)} {_json(s_next)}\n"


def parse_response(line: str) -> float:
    raw = line.rstrip("\r\n")
    try:
        value = float(raw.strip())
    except ValueError:
        raise BridgeError("malformed response", raw) from None
    if not math.isfinite(value):
        raise BridgeError("non-finite response", raw)
    return value


class BlackBoxReward(RewardSource):
    """Handle on one child process; calls are serialised by a lock."""

    kind = "black-box"

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise InputError("empty bridge command")
        self.command = argv
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise BridgeError(f"cannot start {argv[0]!r}: {exc}") from exc
        hello = self._proc.stdout.readline()
        if hello.rstrip("\r\n") != HANDSHAKE:
            self.close()
            raise BridgeError("bad handshake", hello.rstrip("\r\n") if hello else None)

    def _readline(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise BridgeError(f"child exited (status {code}) before answering", "")
        return line

    def evaluate(self, batch: Transitions) -> np.ndarray:
        out = np.empty(len(batch))
        with self._lock:
            if self._proc.poll() is not None:
                raise BridgeError(f"child has exited (status {self._proc.returncode})")
            try:
                for start in range(0, len(batch), CHUNK):
                    stop = min(start + CHUNK, len(batch))
                    self._proc.stdin.write(
                        "".join(encode_request(batch.s[i], batch.a[i], batch.s_next[i]) for i in range(start, stop))
                    )
                    self._proc.stdin.flush()
                    for i in range(start, stop):
                        out[i] = parse_response(self._readline())
            except (BrokenPipeError, OSError) as exc:
                raise BridgeError(f"lost connection to child: {exc}") from exc
        return out

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self) -> "BlackBoxReward":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def blackbox_reward(command: str | Sequence[str]) -> BlackBoxReward:
    return BlackBoxReward(command)
