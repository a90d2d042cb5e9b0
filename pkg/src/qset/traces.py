"""Uniformly sampled current traces and their CSV wire format.

A :class:`CurrentTrace` is the common currency between the synthesis side
(telegraph, drift, pink noise generators) and the analysis side (baseline
removal, state detection, spectral estimation).  Traces are immutable:
the sample array is copied on construction and marked read-only.

The on-disk format is a plain CSV with header ``time_s,current_A``.
Floats are written with 17 significant digits so a write/read round trip
is bit exact for float64 data.  Optional annotation columns carry ground
truth from the generators: ``state`` (integer level index) and any number
of ``component_<name>`` columns with the additive noise components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import TraceParseError

#: Relative jitter in the sample spacing above which a file is rejected.
DT_REL_TOL = 1e-6

_FLOAT_FMT = "%.17g"


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CurrentTrace:
    """A uniformly sampled current record.

    Parameters
    ----------
    t0 : float
        Time of the first sample (s).
    dt : float
        Sample spacing (s), strictly positive.
    samples : ndarray
        Current samples (A).  Copied and frozen.
    annotations : mapping, optional
        Extra per-sample arrays, each the same length as ``samples``.
        Keys ``state`` and ``component_*`` survive a CSV round trip.
    """

    t0: float
    dt: float
    samples: np.ndarray
    annotations: Mapping[str, np.ndarray] | None = None

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if not np.isfinite(self.t0):
            raise ValueError(f"t0 must be finite, got {self.t0!r}")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", _readonly(samples))
        if self.annotations is not None:
            frozen = {}
            for key, arr in self.annotations.items():
                arr = np.asarray(arr)
                if arr.shape != samples.shape:
                    raise ValueError(
                        f"annotation {key!r} has shape {arr.shape}, "
                        f"expected {samples.shape}"
                    )
                arr = arr.copy()
                arr.flags.writeable = False
                frozen[key] = arr
            object.__setattr__(self, "annotations", MappingProxyType(frozen))

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Time spanned between first and last sample."""
        return (self.n - 1) * self.dt

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def annotation(self, key: str) -> np.ndarray:
        if self.annotations is None or key not in self.annotations:
            raise KeyError(f"trace has no annotation {key!r}")
        return self.annotations[key]


def n_samples(duration: float, dt: float) -> int:
    """Grid size for a record covering [0, duration] inclusive."""
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    return int(round(duration / dt)) + 1


def write_trace(trace: CurrentTrace, path) -> None:
    """Write a trace (and its persistable annotations) as CSV."""
    ann = trace.annotations or {}
    extra_keys = [k for k in ann if k == "state" or k.startswith("component_")]
    times = trace.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "current_A"] + extra_keys)
        columns = [times, trace.samples] + [ann[k] for k in extra_keys]
        int_col = [False, False] + [k == "state" for k in extra_keys]
        for row in zip(*columns):
            writer.writerow(
                [
                    ("%d" % v) if is_int else (_FLOAT_FMT % v)
                    for v, is_int in zip(row, int_col)
                ]
            )


def read_trace(path) -> CurrentTrace:
    """Read a CSV trace written by :func:`write_trace`.

    Raises
    ------
    TraceParseError
        On malformed rows (with the offending line number), non-monotone
        or non-uniform time stamps, or non-finite currents.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if header[:2] != ["time_s", "current_A"]:
            raise TraceParseError(
                f"expected header starting with 'time_s,current_A', got {header[:2]}",
                line=1,
            )
        ncol = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise TraceParseError(
                    f"expected {ncol} columns, got {len(row)}", line=lineno
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise TraceParseError(
                    f"could not parse row as numbers: {row!r}", line=lineno
                ) from None
    if len(rows) < 2:
        raise TraceParseError("need at least two samples", line=len(rows) + 1)

    data = np.asarray(rows, dtype=float)
    times, currents = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise TraceParseError("non-finite value", line=bad + 2)
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        bad = int(np.flatnonzero(diffs <= 0)[0])
        raise TraceParseError("time stamps not strictly increasing", line=bad + 3)
    dt = (times[-1] - times[0]) / (len(times) - 1)
    if np.max(np.abs(diffs - dt)) > DT_REL_TOL * dt:
        bad = int(np.argmax(np.abs(diffs - dt)))
        raise TraceParseError(
            f"non-uniform sampling (spacing deviates from {dt:g} s by more "
            f"than {DT_REL_TOL:g} relative)",
            line=bad + 3,
        )

    annotations = {}
    for j, key in enumerate(header[2:], start=2):
        col = data[:, j]
        if key == "state":
            col = col.astype(int)
        annotations[key] = col
    return CurrentTrace(
        t0=float(times[0]),
        dt=float(dt),
        samples=currents,
        annotations=annotations or None,
    )
