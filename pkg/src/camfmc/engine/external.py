"""Models evaluated by a child process over line-delimited JSON.

Requests and responses are one JSON object per line on the child's stdin
and stdout, answered in order::

    {"op": "info"}                       -> {"ok": true, "dimension": d, "label": "..."}
    {"op": "train", "n": 159, "seed": 1} -> {"ok": true, "train_cost_seconds": t}
    {"op": "eval", "id": 7, "inputs": [[...], ...]}
        -> {"ok": true, "id": 7, "outputs": [...], "cost_seconds": t}

Failures are reported as ``{"ok": false, "error": "..."}`` and may carry an
``"index"`` field naming the failing input within the request.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import time

import numpy as np

from .models import EvaluationError

__all__ = ["ExternalModel", "ExternalModelError"]


class ExternalModelError(EvaluationError):
    pass


class ExternalModel:
    """Handle on a child-process model.

    Parameters
    ----------
    command : str or list of str
        Command line that starts the child.
    cost : float, optional
        Per-evaluation cost in high-fidelity units. When omitted it is
        measured: wall-clock seconds per evaluation (or the child's own
        ``cost_seconds``), averaged over each batch and divided by
        ``hf_cost_seconds``.
    chunk_size : int
        Maximum number of inputs per ``eval`` request.
    """

    def __init__(
        self,
        command,
        label: str = "external",
        cwd=None,
        cost: float | None = None,
        hf_cost_seconds: float = 1.0,
        chunk_size: int = 1024,
    ):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.label = label
        self.cwd = cwd
        self.hf_cost_seconds = float(hf_cost_seconds)
        self.chunk_size = int(chunk_size)
        self._configured_cost = cost
        self._measured = []  # (seconds, count) per batch
        self._proc = None
        self._next_id = 0
        self.train_cost_seconds = None

    # process management

    def start(self) -> "ExternalModel":
        if self._proc is None:
            self._proc = subprocess.Popen(
                self.command,
                cwd=self.cwd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        proc.stdout.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _request(self, payload: dict, offset: int = 0) -> dict:
        self.start()
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ExternalModelError(f"{self.label}: child process died ({exc})", offset) from None
        if not line:
            try:
                code = self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                code = None
            raise ExternalModelError(
                f"{self.label}: child process closed its output (exit code {code})", offset
            )
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            raise ExternalModelError(
                f"{self.label}: malformed response {line.strip()[:200]!r}", offset
            ) from None
        if not isinstance(resp, dict):
            raise ExternalModelError(f"{self.label}: response is not a JSON object", offset)
        if not resp.get("ok", False):
            idx = resp.get("index")
            where = offset + int(idx) if isinstance(idx, int) else offset
            raise ExternalModelError(
                f"{self.label}: {resp.get('error', 'unspecified error')}", where
            )
        return resp

    # protocol operations

    def info(self) -> dict:
        return self._request({"op": "info"})

    def train(self, n: int, seed: int) -> "ExternalModel":
        resp = self._request({"op": "train", "n": int(n), "seed": int(seed)})
        self.train_cost_seconds = resp.get("train_cost_seconds")
        return self

    def evaluate(self, inputs) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], self.chunk_size):
            b = min(a + self.chunk_size, x.shape[0])
            rid = self._next_id
            self._next_id += 1
            t0 = time.perf_counter()
            resp = self._request({"op": "eval", "id": rid, "inputs": x[a:b].tolist()}, a)
            elapsed = time.perf_counter() - t0
            if resp.get("id") != rid:
                raise ExternalModelError(
                    f"{self.label}: response id {resp.get('id')!r} does not match request {rid}", a
                )
            vals = resp.get("outputs")
            if not isinstance(vals, list) or len(vals) != b - a:
                raise ExternalModelError(
                    f"{self.label}: expected {b - a} outputs", a
                )
            try:
                arr = np.array(vals, dtype=float)
            except (TypeError, ValueError):
                raise ExternalModelError(f"{self.label}: non-numeric outputs", a) from None
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise ExternalModelError(f"{self.label}: non-finite output", a + int(bad[0]))
            out[a:b] = arr
            secs = resp.get("cost_seconds", elapsed)
            self._measured.append((float(secs), b - a))
        return out

    @property
    def measured_cost(self) -> float | None:
        """Mean measured cost per evaluation in high-fidelity units."""
        if not self._measured:
            return None
        secs = sum(s for s, _ in self._measured)
        count = sum(c for _, c in self._measured)
        return secs / count / self.hf_cost_seconds

    @property
    def cost(self) -> float | None:
        if self._configured_cost is not None:
            return float(self._configured_cost)
        return self.measured_cost
