"""Shared request loop for stdio bridge servers.

Wire format: one JSON object per line on stdin, one JSON reply per line on
stdout. Replies are serialized with sorted keys and compact separators so a
given request always produces identical bytes.
"""

from __future__ import annotations

import json
import sys

PROTOCOL_VERSION = 1


def _write(stream, obj: dict):
    stream.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
    stream.flush()


class Handler:
    """Model-specific part of a server: dimensions, capabilities, sampling."""

    has_density = False
    p: int
    d: int

    def sample(self, x: list[float], k: int, seed: int):
        """Returns (samples as a (k, d) nested list, densities list or None)."""
        raise NotImplementedError


def _handle(handler: Handler, req: dict) -> dict:
    op = req.get("op")
    if op == "hello":
        if req.get("version") != PROTOCOL_VERSION:
            return {"ok": False, "err": "unsupported protocol version"}
        return {
            "ok": True,
            "has_density": handler.has_density,
            "p": handler.p,
            "d": handler.d,
        }
    if op == "sample":
        try:
            x = [float(v) for v in req["x"]]
            k = int(req["k"])
            seed = int(req["seed"])
        except (KeyError, TypeError, ValueError):
            return {"ok": False, "err": "malformed sample request"}
        if len(x) != handler.p:
            return {"ok": False, "err": f"x must have length {handler.p}"}
        if k < 1:
            return {"ok": False, "err": "k must be positive"}
        samples, densities = handler.sample(x, k, seed)
        reply = {"samples": samples}
        if handler.has_density:
            reply["densities"] = densities
        return reply
    return {"ok": False, "err": f"unknown op {op!r}"}


def serve(handler: Handler, stdin=None, stdout=None) -> int:
    """Answer requests until a bye message or end of input; returns 0."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            _write(stdout, {"ok": False, "err": "malformed request"})
            continue
        if not isinstance(req, dict):
            _write(stdout, {"ok": False, "err": "malformed request"})
            continue
        if req.get("op") == "bye":
            _write(stdout, {"ok": True})
            return 0
        try:
            reply = _handle(handler, req)
        except Exception as exc:  # keep serving after a bad request
            reply = {"ok": False, "err": f"internal error: {exc}"}
        _write(stdout, reply)
    return 0
