#!/usr/bin/env python3
"""Regenerate the committed acceptance fixtures.

Fixtures are produced by this package itself (never hand-entered):
  tests/fixtures/sod_eps1e-2_fulldsmc_10x.csv
      density profile at t = 0.8 of a moment-guided full-DSMC Sod run at
      ten times the scenario particle budget (seed 424242); used as the
      high-resolution reference for the hybrid-accuracy acceptance check.

Run from the repository root:  python3 scripts/make_reference.py
Takes on the order of ten minutes (the 10x run carries 4e6 particles).
"""
import csv
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from hybridgas import runner, scenarios  # noqa: E402

FIXTURE_DIR = ROOT / "tests" / "fixtures"
SEED = 424242


def sod_reference():
    cfg = scenarios.builtin_scenario("sod", eps=1e-2, seed=SEED)
    cfg = scenarios.with_overrides(cfg, budget_value=10 * cfg.budget.value)
    t0 = time.time()
    res = runner.run(cfg, mode="full-dsmc")
    rec = res.snapshots[-1]
    out = FIXTURE_DIR / "sod_eps1e-2_fulldsmc_10x.csv"
    with open(out, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "x", "rho", "time"])
        for j in range(len(rec.x)):
            w.writerow([j, repr(float(rec.x[j])), repr(float(rec.rho[j])), repr(float(rec.time))])
    print(f"wrote {out} (t={rec.time:.6f}, {res.sim.step_index} steps, {time.time() - t0:.0f}s)")


if __name__ == "__main__":
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    sod_reference()
