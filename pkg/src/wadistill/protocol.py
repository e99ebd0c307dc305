"""Wire-protocol client for external oracles.

Newline-delimited JSON messages over a subprocess's stdio or a TCP socket.
Requests carry an ``op`` field; every response answers exactly one request
and carries ``ok``.  Minus infinity travels as the literal token ``"-inf"``
because JSON has no spelling for it.

    -> {"op": "hello", "version": 1}
    <- {"ok": true, "alphabet_size": N, "supports_next_dist": true}
    -> {"op": "logprob", "seqs": [[0, 1], [2]]}
    <- {"ok": true, "logprobs": [-3.1781, "-inf"]}
    -> {"op": "next_dist", "prefixes": [[0]]}
    <- {"ok": true, "dists": [[0.4375, 0.4375, 0.0625]]}
    -> {"op": "shutdown"}
    <- {"ok": true}

Failures use ``{"ok": false, "error": "<code>", "detail": "..."}``.
"""

from __future__ import annotations

import json
import math
import os
import select
import shlex
import socket
import subprocess

import numpy as np

from .alphabet import Alphabet
from .errors import CapabilityError, CorruptAnswer, OracleUnavailable, ProtocolError
from .oracle import NEG_INF, Oracle

PROTOCOL_VERSION = 1

# Sequences per logprob/next_dist message; keeps lines at a sane size.
BATCH_LIMIT = 10_000


def encode_message(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def decode_logprob(value) -> float:
    if value == "-inf":
        return NEG_INF
    if isinstance(value, (int, float)):
        value = float(value)
        if math.isnan(value):
            raise CorruptAnswer("backend sent NaN")
        return value
    raise ProtocolError(f"unparseable log-probability {value!r}")


class _StdioTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        self._fd = self.proc.stdout.fileno()
        self._buf = bytearray()

    def send(self, data: bytes):
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise OracleUnavailable(f"oracle process is gone: {e}") from None

    def recv_line(self, timeout: float) -> bytes:
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line
            ready, _, _ = select.select([self._fd], [], [], timeout)
            if not ready:
                raise OracleUnavailable(f"oracle did not answer within {timeout}s")
            chunk = os.read(self._fd, 1 << 16)
            if not chunk:
                raise OracleUnavailable("oracle closed its output")
            self._buf.extend(chunk)

    def close(self):
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class _TcpTransport:
    def __init__(self, host: str, port: int):
        try:
            self.sock = socket.create_connection((host, port), timeout=10)
        except OSError as e:
            raise OracleUnavailable(f"cannot connect to {host}:{port}: {e}") from None
        self._buf = bytearray()

    def send(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise OracleUnavailable(f"send failed: {e}") from None

    def recv_line(self, timeout: float) -> bytes:
        self.sock.settimeout(timeout)
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line
            try:
                chunk = self.sock.recv(1 << 16)
            except socket.timeout:
                raise OracleUnavailable(f"oracle did not answer within {timeout}s") from None
            except OSError as e:
                raise OracleUnavailable(f"recv failed: {e}") from None
            if not chunk:
                raise OracleUnavailable("oracle closed the connection")
            self._buf.extend(chunk)

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class ExternalOracle(Oracle):
    """Client side of the wire protocol.

    ``transport`` is ``"exec:<command>"`` for a stdio subprocess or
    ``"tcp:<host>:<port>"``.  When ``alphabet`` is given its size must match
    what the server advertises; otherwise a synthetic alphabet of the
    advertised size is adopted.
    """

    def __init__(self, transport: str, alphabet: Alphabet | None = None, *,
                 timeout: float = 30.0):
        self.timeout = timeout
        if transport.startswith("exec:"):
            self._transport = _StdioTransport(transport[len("exec:"):])
        elif transport.startswith("tcp:"):
            host, _, port = transport[len("tcp:"):].rpartition(":")
            if not host or not port.isdigit():
                raise ProtocolError(f"bad tcp endpoint {transport!r}")
            self._transport = _TcpTransport(host, int(port))
        else:
            raise ProtocolError(f"unknown transport {transport!r}")
        self._closed = False

        hello = self._roundtrip({"op": "hello", "version": PROTOCOL_VERSION})
        size = hello.get("alphabet_size")
        if not isinstance(size, int) or size < 1:
            raise ProtocolError(f"server advertised alphabet_size {size!r}")
        if alphabet is not None and alphabet.size != size:
            raise ProtocolError(
                f"alphabet size mismatch: local {alphabet.size}, server {size}"
            )
        self.alphabet = alphabet if alphabet is not None else Alphabet.of_size(size)
        self.supports_next_dist = bool(hello.get("supports_next_dist", False))
        self.hello_payload = hello

    def _roundtrip(self, msg: dict) -> dict:
        self._transport.send(encode_message(msg))
        line = self._transport.recv_line(self.timeout)
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ProtocolError(f"unparseable reply: {e}") from None
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError(f"reply missing 'ok': {reply!r}")
        if not reply["ok"]:
            code = reply.get("error", "unknown")
            detail = reply.get("detail", "")
            raise ProtocolError(f"server error {code}: {detail}")
        return reply

    def _eval_logprobs(self, seqs) -> list:
        out = []
        for start in range(0, len(seqs), BATCH_LIMIT):
            chunk = [list(s) for s in seqs[start:start + BATCH_LIMIT]]
            try:
                reply = self._roundtrip({"op": "logprob", "seqs": chunk})
                values = reply.get("logprobs")
                if not isinstance(values, list) or len(values) != len(chunk):
                    raise ProtocolError("logprobs length mismatch")
                out.extend(decode_logprob(v) for v in values)
            except OracleUnavailable as e:
                out.extend([e] * len(chunk))
        return out

    def next_dist(self, prefix) -> np.ndarray:
        return self.batch_next_dist([prefix])[0]

    def batch_next_dist(self, prefixes) -> list:
        if not self.supports_next_dist:
            raise CapabilityError("server does not support next_dist")
        out = []
        width = self.alphabet.size + 1
        for start in range(0, len(prefixes), BATCH_LIMIT):
            chunk = [list(p) for p in prefixes[start:start + BATCH_LIMIT]]
            reply = self._roundtrip({"op": "next_dist", "prefixes": chunk})
            dists = reply.get("dists")
            if not isinstance(dists, list) or len(dists) != len(chunk):
                raise ProtocolError("dists length mismatch")
            for row in dists:
                if not isinstance(row, list) or len(row) != width:
                    raise ProtocolError(
                        f"next_dist row must have {width} entries, got {row!r}"
                    )
                arr = np.asarray(row, dtype=np.float64)
                if not np.isfinite(arr).all():
                    raise CorruptAnswer("backend sent a non-finite distribution")
                out.append(arr)
        return out

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self._roundtrip({"op": "shutdown"})
        except (OracleUnavailable, ProtocolError):
            pass
        self._transport.close()
