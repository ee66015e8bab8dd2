"""Figure specifications: what to draw from which run directories."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .runs import check_same_grid, load_run

KINDS = ("field-overlay", "transition", "particle-count")
VARIABLES = ("rho", "ux", "T", "h")
ROLES = ("hybrid", "euler", "reference")

# manifest mode -> default styling role
_MODE_ROLE = {"coupled": "hybrid", "euler-only": "euler", "full-dsmc": "reference"}


@dataclass
class FigureSpec:
    kind: str
    inputs: list  # [(path, role-or-None), ...]
    variable: str = "rho"
    times: list = field(default_factory=list)  # empty: all times of first input
    out_dir: str = "figures"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.variable not in VARIABLES:
            raise ValueError(f"unknown variable {self.variable!r}")
        if not self.inputs:
            raise ValueError("at least one input run is required")

    def load(self):
        """Load and validate all referenced runs; assigns missing roles."""
        runs = []
        for path, role in self.inputs:
            run = load_run(path)
            role = role or _MODE_ROLE.get(run.mode, "hybrid")
            runs.append((run, role))
        check_same_grid([r for r, _ in runs])
        return runs


def spec_from_json(path) -> FigureSpec:
    raw = json.loads(Path(path).read_text())
    inputs = []
    for item in raw.get("inputs", []):
        if isinstance(item, str):
            inputs.append((item, None))
        else:
            role = item.get("role")
            if role is not None and role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            inputs.append((item["path"], role))
    return FigureSpec(
        kind=raw["kind"],
        inputs=inputs,
        variable=raw.get("variable", "rho"),
        times=list(raw.get("times", [])),
        out_dir=raw.get("out_dir", "figures"),
    )


def auto_specs(run_dir, out_dir="figures") -> list:
    """Default figure set for a single run: field overlays for rho/ux/T,
    transition panels, and the particle-count series."""
    specs = []
    for var in ("rho", "ux", "T"):
        specs.append(FigureSpec("field-overlay", [(str(run_dir), None)], var, [], out_dir))
    specs.append(FigureSpec("transition", [(str(run_dir), None)], "h", [], out_dir))
    specs.append(FigureSpec("particle-count", [(str(run_dir), None)], "rho", [], out_dir))
    return specs
