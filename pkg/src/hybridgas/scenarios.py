"""Scenario configurations: builtin experiments, file parsing, serialization.

Config files are flat key=value text with section headers (configparser
syntax), versioned with schema=1; see README for the full schema.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace

import numpy as np

from .core import ConservedField, GridSpec
from .errors import UnknownScenario

SCHEMA_VERSION = 1
DEFAULT_BETA_THR = 2.5e-2
DEFAULT_SEED = 1
BUILTIN_NAMES = ("two-freq", "unsteady-shock", "sod")


@dataclass(frozen=True)
class EpsilonSpec:
    """Constant relaxation parameter, or a left/right pair split at split_x."""

    left: float
    right: float | None = None
    split_x: float | None = None

    @property
    def constant(self) -> bool:
        return self.right is None

    def min_value(self) -> float:
        return self.left if self.constant else min(self.left, self.right)

    def field(self, grid: GridSpec) -> np.ndarray:
        if self.constant:
            return np.full(grid.n_cells, self.left)
        return np.where(grid.centers() < self.split_x, self.left, self.right)


@dataclass(frozen=True)
class UniformInit:
    rho: float
    ux: float
    T: float

    def build(self, grid: GridSpec) -> ConservedField:
        n = grid.n_cells
        u = np.zeros((n, 3))
        u[:, 0] = self.ux
        return ConservedField.from_primitives(grid, np.full(n, self.rho), u, np.full(n, self.T))


@dataclass(frozen=True)
class PiecewiseInit:
    """Left state for x <= split_x, right state beyond (cell centers decide)."""

    left: tuple  # (rho, ux, T)
    right: tuple
    split_x: float

    def build(self, grid: GridSpec) -> ConservedField:
        x = grid.centers()
        sel = x <= self.split_x
        rho = np.where(sel, self.left[0], self.right[0])
        theta = np.where(sel, self.left[2], self.right[2])
        u = np.zeros((grid.n_cells, 3))
        u[:, 0] = np.where(sel, self.left[1], self.right[1])
        return ConservedField.from_primitives(grid, rho, u, theta)


@dataclass(frozen=True)
class BumpInit:
    """Density profile base + amplitude * sqrt((x-center)^2 / scale)."""

    base: float
    amplitude: float
    center: float
    scale: float
    ux: float
    T: float

    def build(self, grid: GridSpec) -> ConservedField:
        x = grid.centers()
        rho = self.base + self.amplitude * np.sqrt((x - self.center) ** 2 / self.scale)
        u = np.zeros((grid.n_cells, 3))
        u[:, 0] = self.ux
        return ConservedField.from_primitives(grid, rho, u, np.full(grid.n_cells, self.T))


@dataclass(frozen=True)
class ParticleBudget:
    """Either particles per unit density in one cell, or a domain total."""

    kind: str  # "per-unit-density" | "total"
    value: float

    def __post_init__(self):
        if self.kind not in ("per-unit-density", "total"):
            raise ValueError(f"unknown budget kind {self.kind!r}")
        if not self.value > 0:
            raise ValueError("particle budget must be positive")

    def m_p(self, initial: ConservedField) -> float:
        if self.kind == "per-unit-density":
            return initial.grid.dx / self.value
        total_mass = float(np.sum(initial.rho) * initial.grid.dx)
        return total_mass / self.value


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: GridSpec
    epsilon: EpsilonSpec
    initial: object  # UniformInit | PiecewiseInit | BumpInit
    budget: ParticleBudget
    buffer_width: int
    beta_thr: float
    boundaries: tuple  # (left, right) in {"reflecting", "open"}
    t_end: float
    output_times: tuple
    seed: int

    def __post_init__(self):
        for t in self.output_times:
            if not 0.0 <= t <= self.t_end + 1e-12:
                raise ValueError(f"output time {t} outside [0, t_end]")


def _sod_budget(eps: float) -> float:
    if eps >= 1e-1:
        return 6e5
    if eps >= 1e-2:
        return 4e5
    return 2e5


def _buffer_for(eps_min: float) -> int:
    return 5 if eps_min <= 1e-3 else 10


def builtin_scenario(name: str, eps: EpsilonSpec | float | None = None, seed: int = DEFAULT_SEED) -> ScenarioConfig:
    """The three reference experiments with their published parameters."""
    if name == "two-freq":
        eps_spec = EpsilonSpec(1e-4, 1e-2, 0.5) if eps is None else _as_eps(eps, 0.5)
        return ScenarioConfig(
            name=name,
            grid=GridSpec(0.0, 1.0, 200),
            epsilon=eps_spec,
            initial=BumpInit(base=1.0, amplitude=0.1, center=0.5, scale=0.02, ux=0.0, T=1.0),
            budget=ParticleBudget("total", 80000.0),
            buffer_width=10,
            beta_thr=DEFAULT_BETA_THR,
            boundaries=("open", "open"),
            t_end=0.15,
            output_times=(0.05, 0.10, 0.15),
            seed=seed,
        )
    if name == "unsteady-shock":
        eps_spec = _as_eps(1e-2 if eps is None else eps, 0.75)
        return ScenarioConfig(
            name=name,
            grid=GridSpec(0.0, 1.5, 200),
            epsilon=eps_spec,
            initial=UniformInit(rho=1.0, ux=-2.0, T=4.0),
            budget=ParticleBudget("per-unit-density", 400.0),
            buffer_width=_buffer_for(eps_spec.min_value()),
            beta_thr=DEFAULT_BETA_THR,
            boundaries=("reflecting", "open"),
            t_end=0.15,
            output_times=(0.05, 0.10, 0.15),
            seed=seed,
        )
    if name == "sod":
        eps_spec = _as_eps(1e-2 if eps is None else eps, 1.0)
        return ScenarioConfig(
            name=name,
            grid=GridSpec(0.0, 2.0, 200),
            epsilon=eps_spec,
            initial=PiecewiseInit(left=(1.0, 0.0, 5.0), right=(0.125, 0.0, 4.0), split_x=1.0),
            budget=ParticleBudget("total", _sod_budget(eps_spec.min_value())),
            buffer_width=_buffer_for(eps_spec.min_value()),
            beta_thr=DEFAULT_BETA_THR,
            boundaries=("open", "open"),
            t_end=0.8,
            output_times=(0.3, 0.6, 0.8),
            seed=seed,
        )
    raise UnknownScenario(name)


def _as_eps(eps, default_split: float) -> EpsilonSpec:
    if isinstance(eps, EpsilonSpec):
        return eps
    if isinstance(eps, (tuple, list)):
        left, right = eps
        return EpsilonSpec(float(left), float(right), default_split)
    return EpsilonSpec(float(eps))


# ---------------------------------------------------------------------------
# flat key=value serialization (schema 1)
# ---------------------------------------------------------------------------


def serialize(config: ScenarioConfig) -> str:
    cp = configparser.ConfigParser()
    cp["scenario"] = {
        "schema": str(SCHEMA_VERSION),
        "name": config.name,
        "seed": str(config.seed),
    }
    cp["grid"] = {
        "x_min": repr(config.grid.x_min),
        "x_max": repr(config.grid.x_max),
        "n_cells": str(config.grid.n_cells),
    }
    eps = config.epsilon
    if eps.constant:
        cp["epsilon"] = {"kind": "constant", "value": repr(eps.left)}
    else:
        cp["epsilon"] = {
            "kind": "split",
            "left": repr(eps.left),
            "right": repr(eps.right),
            "split_x": repr(eps.split_x),
        }
    init = config.initial
    if isinstance(init, UniformInit):
        cp["initial"] = {
            "kind": "uniform",
            "rho": repr(init.rho),
            "ux": repr(init.ux),
            "t": repr(init.T),
        }
    elif isinstance(init, PiecewiseInit):
        cp["initial"] = {
            "kind": "piecewise",
            "left": ",".join(repr(v) for v in init.left),
            "right": ",".join(repr(v) for v in init.right),
            "split_x": repr(init.split_x),
        }
    elif isinstance(init, BumpInit):
        cp["initial"] = {
            "kind": "density-bump",
            "base": repr(init.base),
            "amplitude": repr(init.amplitude),
            "center": repr(init.center),
            "scale": repr(init.scale),
            "ux": repr(init.ux),
            "t": repr(init.T),
        }
    else:
        raise TypeError(f"unknown initial kind {type(init)}")
    cp["particles"] = {"budget_kind": config.budget.kind, "budget": repr(config.budget.value)}
    cp["coupling"] = {
        "buffer_width": str(config.buffer_width),
        "beta_thr": repr(config.beta_thr),
    }
    cp["boundaries"] = {"left": config.boundaries[0], "right": config.boundaries[1]}
    cp["time"] = {
        "t_end": repr(config.t_end),
        "output_times": ",".join(repr(t) for t in config.output_times),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    schema = cp.getint("scenario", "schema")
    if schema != SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema {schema}")
    grid = GridSpec(
        cp.getfloat("grid", "x_min"), cp.getfloat("grid", "x_max"), cp.getint("grid", "n_cells")
    )
    ek = cp.get("epsilon", "kind")
    if ek == "constant":
        eps = EpsilonSpec(cp.getfloat("epsilon", "value"))
    elif ek == "split":
        eps = EpsilonSpec(
            cp.getfloat("epsilon", "left"),
            cp.getfloat("epsilon", "right"),
            cp.getfloat("epsilon", "split_x"),
        )
    else:
        raise ValueError(f"unknown epsilon kind {ek!r}")
    ik = cp.get("initial", "kind")
    if ik == "uniform":
        init = UniformInit(
            cp.getfloat("initial", "rho"), cp.getfloat("initial", "ux"), cp.getfloat("initial", "t")
        )
    elif ik == "piecewise":
        left = tuple(float(v) for v in cp.get("initial", "left").split(","))
        right = tuple(float(v) for v in cp.get("initial", "right").split(","))
        init = PiecewiseInit(left, right, cp.getfloat("initial", "split_x"))
    elif ik == "density-bump":
        init = BumpInit(
            cp.getfloat("initial", "base"),
            cp.getfloat("initial", "amplitude"),
            cp.getfloat("initial", "center"),
            cp.getfloat("initial", "scale"),
            cp.getfloat("initial", "ux"),
            cp.getfloat("initial", "t"),
        )
    else:
        raise ValueError(f"unknown initial kind {ik!r}")
    return ScenarioConfig(
        name=cp.get("scenario", "name"),
        grid=grid,
        epsilon=eps,
        initial=init,
        budget=ParticleBudget(cp.get("particles", "budget_kind"), cp.getfloat("particles", "budget")),
        buffer_width=cp.getint("coupling", "buffer_width"),
        beta_thr=cp.getfloat("coupling", "beta_thr"),
        boundaries=(cp.get("boundaries", "left"), cp.get("boundaries", "right")),
        t_end=cp.getfloat("time", "t_end"),
        output_times=tuple(float(t) for t in cp.get("time", "output_times").split(",")),
        seed=cp.getint("scenario", "seed"),
    )


def with_overrides(
    config: ScenarioConfig,
    eps: EpsilonSpec | None = None,
    seed: int | None = None,
    beta_thr: float | None = None,
    buffer_width: int | None = None,
    budget_value: float | None = None,
) -> ScenarioConfig:
    out = config
    if eps is not None:
        out = replace(out, epsilon=eps)
    if seed is not None:
        out = replace(out, seed=seed)
    if beta_thr is not None:
        out = replace(out, beta_thr=beta_thr)
    if buffer_width is not None:
        out = replace(out, buffer_width=buffer_width)
    if budget_value is not None:
        out = replace(out, budget=ParticleBudget(out.budget.kind, budget_value))
    return out
