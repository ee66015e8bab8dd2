"""Reading hybridgas run directories: snapshot CSVs, series CSV, manifest."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNAPSHOT_HEADER = ["time", "cell", "x", "rho", "ux", "T", "h", "beta", "np"]
SERIES_HEADER = ["step", "time", "dt", "total_particles"]

FIELD_COLUMNS = {"rho": 3, "ux": 4, "T": 5, "h": 6, "beta": 7}


@dataclass
class Snapshot:
    time: float
    x: np.ndarray
    columns: dict  # name -> array


@dataclass
class RunData:
    path: Path
    snapshots: list
    series: np.ndarray  # (n_steps, 4): step, time, dt, total_particles
    mode: str
    label: str

    def snapshot_times(self):
        return [s.time for s in self.snapshots]

    def at_time(self, t: float) -> Snapshot:
        times = np.array(self.snapshot_times())
        return self.snapshots[int(np.argmin(np.abs(times - t)))]


def _read_snapshot(path: Path) -> Snapshot:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != SNAPSHOT_HEADER:
        raise ValueError(f"{path}: unexpected snapshot header {rows[0]}")
    body = np.array(rows[1:], dtype=object)
    cols = {name: np.array([float(v) for v in body[:, i]]) for name, i in FIELD_COLUMNS.items()}
    cols["np"] = np.array([int(v) for v in body[:, 8]])
    return Snapshot(
        time=float(body[0, 0]),
        x=np.array([float(v) for v in body[:, 2]]),
        columns=cols,
    )


def load_run(path) -> RunData:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"run directory {path} does not exist")
    snap_paths = sorted(path.glob("snapshot_*.csv"))
    if not snap_paths:
        raise FileNotFoundError(f"{path}: no snapshot_*.csv files")
    snapshots = [_read_snapshot(p) for p in snap_paths]
    series_path = path / "series.csv"
    series = np.empty((0, 4))
    if series_path.exists():
        with open(series_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != SERIES_HEADER:
            raise ValueError(f"{series_path}: unexpected header")
        if len(rows) > 1:
            series = np.array([[float(v) for v in r] for r in rows[1:]])
    mode = "unknown"
    manifest_path = path / "manifest.json"
    if manifest_path.exists():
        mode = json.loads(manifest_path.read_text()).get("mode", "unknown")
    return RunData(path=path, snapshots=snapshots, series=series, mode=mode, label=path.name)


def check_same_grid(runs) -> None:
    """All runs must share the cell-center coordinates of their snapshots."""
    base = runs[0].snapshots[0].x
    for run in runs[1:]:
        if run.snapshots[0].x.shape != base.shape or not np.allclose(
            run.snapshots[0].x, base, rtol=0, atol=1e-12
        ):
            raise ValueError(f"{run.path}: grid differs from {runs[0].path}")
