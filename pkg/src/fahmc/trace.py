"""Chain traces and their on-disk formats.

A trace records the aggregated parameter after selected iterations together
with the stepsize used and whether the iteration began with a broadcast.
The CSV format is ``t,eta,sync,theta_norm`` plus one ``metric_<name>``
column per attached metric; full parameter snapshots go to a binary sidecar
(8-byte little-endian header giving d, then row-major float64 rows).
All writes are atomic (write to a temp file, then rename).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError

__all__ = ["ChainTrace", "write_trace_csv", "write_snapshots", "read_snapshots"]


@dataclass
class ChainTrace:
    """Recorded evolution of the aggregated parameter.

    ``recorded_t[i]`` is an iteration index and ``global_params[i]`` the
    weighted node average *after* that iteration completed.  For a run
    synchronizing every ``T`` iterations, the row with ``t = r*T - 1``
    therefore holds exactly the value broadcast at the start of round ``r``.
    ``sync_events`` lists every iteration that began with a broadcast
    (the multiples of the sync period within the run).  ``metrics`` holds
    per-record series (one value per row); ``sync_dispersion`` is the
    weighted node spread measured at each sync event after the first,
    aligned with ``sync_events[1:]``.
    """

    recorded_t: np.ndarray
    global_params: np.ndarray
    eta_used: np.ndarray
    sync_events: np.ndarray
    sync_flags: np.ndarray
    metrics: dict = field(default_factory=dict)
    sync_dispersion: np.ndarray = field(default_factory=lambda: np.empty(0))
    gradient_evals: int = 0

    @property
    def n_records(self) -> int:
        return len(self.recorded_t)

    @property
    def dim(self) -> int:
        return self.global_params.shape[-1]

    def samples(self, burn_fraction: float = 0.0) -> np.ndarray:
        """Recorded parameters as a sample matrix, optionally discarding a
        leading fraction of records."""
        if self.global_params.ndim != 2:
            raise ContractError("samples() requires an unbatched trace")
        start = int(self.n_records * burn_fraction)
        return self.global_params[start:]

    def theta_at_round(self, round_index: int, period: int) -> np.ndarray:
        """Aggregated parameter at sync round ``round_index`` (the value
        broadcast after ``round_index * period`` iterations).  Requires the
        trace to have recorded iteration ``round_index * period - 1``."""
        t_needed = round_index * period - 1
        hits = np.nonzero(self.recorded_t == t_needed)[0]
        if len(hits) == 0:
            raise ContractError(
                f"iteration {t_needed} was not recorded (record_every mismatch)")
        return self.global_params[hits[0]]


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


def write_trace_csv(trace: ChainTrace, path) -> None:
    """Persist a trace; deterministic byte-for-byte given equal traces."""
    if trace.global_params.ndim != 2:
        raise ContractError("CSV trace persistence requires an unbatched (1-D theta) trace")
    path = Path(path)
    names = sorted(trace.metrics)
    header = "t,eta,sync,theta_norm" + "".join(f",metric_{n}" for n in names)
    lines = [header]
    norms = np.linalg.norm(trace.global_params, axis=-1)
    for i in range(trace.n_records):
        row = [str(int(trace.recorded_t[i])), repr(float(trace.eta_used[i])),
               str(int(trace.sync_flags[i])), repr(float(norms[i]))]
        for n in names:
            row.append(repr(float(trace.metrics[n][i])))
        lines.append(",".join(row))
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def write_snapshots(path, samples: np.ndarray) -> None:
    """Write a sample matrix in the binary snapshot format."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    payload = struct.pack("<Q", samples.shape[1]) + \
        np.ascontiguousarray(samples, dtype="<f8").tobytes()
    _atomic_write_bytes(Path(path), payload)


def read_snapshots(path) -> np.ndarray:
    """Read a sample matrix written by :func:`write_snapshots`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ContractError(f"{path}: truncated snapshot file")
    (d,) = struct.unpack("<Q", raw[:8])
    body = raw[8:]
    if d == 0 or len(body) % (8 * d) != 0:
        raise ContractError(f"{path}: payload is not a whole number of rows of dim {d}")
    return np.frombuffer(body, dtype="<f8").reshape(-1, d).copy()
