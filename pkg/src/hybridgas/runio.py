"""Snapshot and series persistence: CSV with shortest round-trip floats."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

SNAPSHOT_HEADER = ["time", "cell", "x", "rho", "ux", "T", "h", "beta", "np"]
SERIES_HEADER = ["step", "time", "dt", "total_particles"]


@dataclass
class SnapshotRecord:
    time: float
    x: np.ndarray
    rho: np.ndarray
    ux: np.ndarray
    T: np.ndarray
    h: np.ndarray
    beta: np.ndarray
    particle_count: np.ndarray
    total_particles: int

    def __post_init__(self):
        n = len(self.x)
        for name in ("rho", "ux", "T", "h", "beta", "particle_count"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_snapshot(record: SnapshotRecord, path) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        for j in range(len(record.x)):
            w.writerow(
                [
                    _fmt(record.time),
                    j,
                    _fmt(record.x[j]),
                    _fmt(record.rho[j]),
                    _fmt(record.ux[j]),
                    _fmt(record.T[j]),
                    _fmt(record.h[j]),
                    _fmt(record.beta[j]),
                    int(record.particle_count[j]),
                ]
            )


def read_snapshot(path) -> SnapshotRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != SNAPSHOT_HEADER:
        raise ValueError(f"unexpected snapshot header {rows[0]}")
    body = rows[1:]
    cols = list(zip(*body))
    rec = SnapshotRecord(
        time=float(cols[0][0]),
        x=np.array([float(v) for v in cols[2]]),
        rho=np.array([float(v) for v in cols[3]]),
        ux=np.array([float(v) for v in cols[4]]),
        T=np.array([float(v) for v in cols[5]]),
        h=np.array([float(v) for v in cols[6]]),
        beta=np.array([float(v) for v in cols[7]]),
        particle_count=np.array([int(v) for v in cols[8]]),
        total_particles=int(sum(int(v) for v in cols[8])),
    )
    return rec


def write_series(series, path) -> None:
    """series: iterable of (step, time, dt, total_particles)."""
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for step, time, dt, total in series:
            w.writerow([int(step), _fmt(time), _fmt(dt), int(total)])


def read_series(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != SERIES_HEADER:
        raise ValueError(f"unexpected series header {rows[0]}")
    return [(int(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in rows[1:]]
