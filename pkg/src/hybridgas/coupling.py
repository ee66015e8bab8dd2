"""Breakdown detection, transition-field evolution and step orchestration.

The per-step pipeline: time-step selection, region update with buffer ramps
(plus removal/population of particles), reservoir injection and transport,
the moment solve with the particle correction flux, moment matching in every
cell with h > 0, and finally the coupled collision step.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import dsmc, euler, guide
from .core import (
    STAGE_POPULATE,
    ConservedField,
    ParticleEnsemble,
    RngStream,
    field_moments,
    g_flux_array,
    keyed_normals,
    keyed_uniforms,
)
from .errors import SimulationError, ZeroDt

BOLTZMANN_K = 1.380062e-23  # J/K
KNUDSEN_FLUID_THRESHOLD = 0.05

# draw tags inside the populate stage
_D_COUNT = 0
_D_POS = 1
_D_VEL = 2  # tags 2,3,4

# distinct step namespace for the pre-matching populate pass
_POP_REMEDY = 1 << 32


@dataclass(frozen=True)
class BreakdownParams:
    """Threshold and denominator guard for the breakdown indicator."""

    beta_thr: float = 2.5e-2
    grad_floor: float = 1e-12


@dataclass
class TransitionField:
    """Per-cell blend h in [0,1]: 1 on kinetic cells, linear ramp of width
    buffer_width down to 0 on fluid cells."""

    h: np.ndarray
    kinetic_mask: np.ndarray
    buffer_width: int

    @classmethod
    def all_fluid(cls, n: int, buffer_width: int) -> "TransitionField":
        return cls(np.zeros(n), np.zeros(n, dtype=bool), buffer_width)

    @classmethod
    def all_kinetic(cls, n: int, buffer_width: int) -> "TransitionField":
        return cls(np.ones(n), np.ones(n, dtype=bool), buffer_width)


def reference_length(field: ConservedField, grad_floor: float = 1e-12) -> np.ndarray:
    """Gradient length L_j = min_w |w_j| / (|d_x w|_j + delta) over w in
    {rho, rho u_x, rho e}; components with an exactly zero derivative count
    as infinite (no gradient, no breakdown).

    The momentum numerator is floored at the acoustic momentum scale
    rho * sqrt(gamma * theta): |rho u| -> 0 at stagnation points with a
    finite gradient would otherwise force L -> 0 and flag smooth rest
    regions as kinetic forever.
    """
    dx = field.grid.dx
    _, _, theta, _ = field.primitives()
    mom_scale = np.maximum(np.abs(field.mom[:, 0]), field.rho * np.sqrt(euler.GAMMA * theta))
    W = np.stack([field.rho, field.mom[:, 0], field.en], axis=1)
    num = np.stack([np.abs(field.rho), mom_scale, np.abs(field.en)], axis=1)
    grad = np.empty_like(W)
    grad[1:-1] = (W[2:] - W[:-2]) / (2.0 * dx)
    grad[0] = (W[1] - W[0]) / dx
    grad[-1] = (W[-1] - W[-2]) / dx
    agrad = np.abs(grad)
    with np.errstate(divide="ignore"):
        terms = np.where(agrad == 0.0, np.inf, num / (agrad + grad_floor))
    return terms.min(axis=1)


def breakdown_indicator(
    field: ConservedField,
    dt: float,
    eps_field: np.ndarray,
    params: BreakdownParams = BreakdownParams(),
) -> np.ndarray:
    """beta_j = max(0, 1 - mu_j dt / eps_j) * dx / L_j with mu = rho."""
    eps = np.broadcast_to(np.asarray(eps_field, dtype=np.float64), field.rho.shape)
    pref = np.maximum(1.0 - field.rho * dt / eps, 0.0)
    L = reference_length(field, params.grad_floor)
    with np.errstate(divide="ignore"):
        ratio = field.grid.dx / L
    ratio[pref == 0.0] = 0.0  # avoid 0 * inf at fully collisional cells
    return pref * ratio


def mean_free_path(temperature: float, pressure: float, sigma_c: float, k_const: float = BOLTZMANN_K) -> float:
    """lambda = k T / (sqrt(2) pi p sigma_c^2)."""
    return k_const * temperature / (np.sqrt(2.0) * np.pi * pressure * sigma_c**2)


def local_knudsen(
    field: ConservedField,
    j: int,
    sigma_c: float,
    k_const: float = BOLTZMANN_K,
    grad_floor: float = 1e-12,
):
    """Diagnostic local Knudsen number lambda/L_j with T, p from the field,
    plus the fluid-validity flag (below 0.05)."""
    rho, _, theta, _ = field.primitives()
    lam = mean_free_path(theta[j], rho[j] * theta[j], sigma_c, k_const)
    L = reference_length(field, grad_floor)[j]
    eps_prime = lam / L
    return eps_prime, bool(eps_prime < KNUDSEN_FLUID_THRESHOLD)


def update_transition(
    beta: np.ndarray, prev: TransitionField, params: BreakdownParams = BreakdownParams()
) -> TransitionField:
    """Threshold beta with hysteresis and rebuild the buffer ramp.

    A cell turns kinetic when beta > beta_thr and stays kinetic while
    beta > beta_thr / 2; h ramps linearly from 1 on the mask to 0 over
    buffer_width cells.
    """
    n = beta.shape[0]
    nb = prev.buffer_width
    mask = (beta > params.beta_thr) | (prev.kinetic_mask & (beta > 0.5 * params.beta_thr))
    if not np.any(mask):
        return TransitionField(np.zeros(n), mask, nb)
    idx = np.flatnonzero(mask)
    j = np.arange(n)
    pos = np.searchsorted(idx, j)
    d_right = np.where(pos < idx.size, idx[np.minimum(pos, idx.size - 1)] - j, n + nb)
    d_left = np.where(pos > 0, j - idx[np.maximum(pos - 1, 0)], n + nb)
    d = np.minimum(d_right, d_left)
    h = np.maximum(0.0, 1.0 - d / nb)
    return TransitionField(h, mask, nb)


def populate_cells(
    ens: ParticleEnsemble,
    target: ConservedField,
    h_field: np.ndarray,
    rng: RngStream,
    step: int,
) -> None:
    """Fill empty cells with h > 0 by sampling the local fluid Maxwellian.

    Cell j receives stochastic_round(h_j rho_j dx / m_p) particles with
    uniform positions; used both when the kinetic region grows and as the
    empty-cell remedy before matching.
    """
    h = np.asarray(h_field, dtype=np.float64)
    counts = ens.counts()
    need = (h > 0.0) & (counts == 0)
    if not np.any(need):
        return
    grid = ens.grid
    dx = grid.dx
    rho, u, theta, _ = target.primitives()
    demand = np.where(need, h * rho * dx / ens.m_p, 0.0)
    base = np.floor(demand)
    u_round = keyed_uniforms(rng.key(STAGE_POPULATE, step, _D_COUNT), np.arange(grid.n_cells))
    n_new = (base + (u_round < demand - base)).astype(np.int64)
    # never leave an active cell empty when its target exceeds one particle mass
    w = np.where(h > 0.0, h, 1.0) * ens.m_p / dx
    n_new = np.where(need & (n_new == 0) & (h * rho >= w), 1, n_new)
    new_x, new_v = [], []
    for j in np.flatnonzero(need & (n_new > 0)):
        slots = np.arange(n_new[j])
        xs = grid.x_min + (j + keyed_uniforms(rng.key(STAGE_POPULATE, step, _D_POS, j), slots)) * dx
        zs = np.empty((n_new[j], 3))
        for k in range(3):
            zs[:, k] = keyed_normals(rng.key(STAGE_POPULATE, step, _D_VEL + k, j), slots)
        new_x.append(xs)
        new_v.append(u[j] + np.sqrt(theta[j]) * zs)
    if new_x:
        ens.append(np.concatenate(new_x), np.concatenate(new_v))
        ens.rebin()


def compute_dt(field: ConservedField, ens: ParticleEnsemble | None, eps_field) -> float:
    """dt = min(dx/v_max, dx/A_max, min_j eps_j / rho_j).

    The collision term uses eps/mu rather than bare eps so the forward-Euler
    collision probability stays at or below one.
    """
    dx = field.grid.dx
    eps = np.broadcast_to(np.asarray(eps_field, dtype=np.float64), field.rho.shape)
    dt = float(np.min(eps / field.rho))
    A = euler.max_eigenvalue(field)
    if A > 0.0:
        dt = min(dt, dx / A)
    if ens is not None and ens.n > 0:
        v_max = float(np.max(np.abs(ens.v[:, 0])))
        if v_max > 0.0:
            dt = min(dt, dx / v_max)
    if not np.isfinite(dt) or dt < 1e-14:
        raise ZeroDt(f"time step selection produced {dt}")
    return dt


MODES = ("coupled", "full-dsmc", "euler-only")


@dataclass
class Simulation:
    """Single-owner simulation state advanced by step()."""

    field: ConservedField
    ens: ParticleEnsemble
    trans: TransitionField
    eps_field: np.ndarray
    params: BreakdownParams
    boundaries: tuple  # (left kind, right kind): "reflecting" | "open"
    rng: RngStream
    mode: str = "coupled"
    guided: bool = True
    time: float = 0.0
    step_index: int = 0
    beta: np.ndarray = dc_field(default=None)  # last indicator, for diagnostics

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.beta is None:
            self.beta = np.zeros(self.field.grid.n_cells)

    def walls(self):
        g = self.field.grid
        return (
            dsmc.WallBoundary(g.x_min, self.boundaries[0], "left"),
            dsmc.WallBoundary(g.x_max, self.boundaries[1], "right"),
        )


def _particle_eigenvalue(pf: ConservedField) -> float:
    """A_max from a particle-estimated field, ignoring empty cells."""
    filled = pf.rho > 0.0
    if not np.any(filled):
        return 0.0
    u = pf.mom[filled] / pf.rho[filled, None]
    e = pf.en[filled] / pf.rho[filled]
    theta = np.maximum((2.0 * e - np.einsum("ij,ij->i", u, u)) / 3.0, 0.0)
    return float(np.max(np.abs(u[:, 0]) + np.sqrt(euler.GAMMA * theta)))


def _plain_dt(sim: Simulation, pf: ConservedField) -> float:
    """Time step for the plain-DSMC baseline (moments estimated from particles)."""
    dx = sim.field.grid.dx
    eps = np.broadcast_to(np.asarray(sim.eps_field, dtype=np.float64), (sim.field.grid.n_cells,))
    mu = np.where(pf.rho > 0.0, pf.rho, np.inf)
    dt = float(np.min(eps / mu))
    A = _particle_eigenvalue(pf)
    if A > 0.0:
        dt = min(dt, dx / A)
    if sim.ens.n > 0:
        v_max = float(np.max(np.abs(sim.ens.v[:, 0])))
        if v_max > 0.0:
            dt = min(dt, dx / v_max)
    if not np.isfinite(dt) or dt < 1e-14:
        raise ZeroDt(f"time step selection produced {dt}")
    return dt


def step(sim: Simulation) -> Simulation:
    """Advance the simulation by one coupled time step (in place)."""
    try:
        return _step_inner(sim)
    except Exception as exc:  # attach the step index for post-mortems
        if isinstance(exc, SimulationError):
            raise
        raise SimulationError(sim.step_index, exc) from exc


def _step_inner(sim: Simulation) -> Simulation:
    h_pinned = sim.mode != "coupled"
    plain = sim.mode == "full-dsmc" and not sim.guided

    # (1) global time step; the collision rate mu is taken from the same
    # moment field so that h*mu*dt/eps <= 1 holds exactly
    if plain:
        pf_n = field_moments(sim.ens, sim.trans.h)
        dt = _plain_dt(sim, pf_n)
        mu_n = pf_n.rho
    else:
        dt = compute_dt(sim.field, sim.ens if sim.mode != "euler-only" else None, sim.eps_field)
        mu_n = sim.field.rho.copy()

    # (2) breakdown indicator and region update
    if plain:
        sim.beta = np.zeros(sim.field.grid.n_cells)
    else:
        sim.beta = breakdown_indicator(sim.field, dt, sim.eps_field, sim.params)
    if not h_pinned:
        sim.trans = update_transition(sim.beta, sim.trans, sim.params)
        dsmc.rescale_weights(sim.ens, sim.trans.h)
        populate_cells(sim.ens, sim.field, sim.trans.h, sim.rng, sim.step_index)

    # (3) free transport plus reservoir injection, both over the same dt from
    # the time-n state (injection appends its survivors already moved, so it
    # runs after the pre-existing particles were transported)
    if sim.mode != "euler-only":
        dsmc.transport(sim.ens, dt, sim.walls())
        dsmc.inject_reservoir(sim.ens, sim.field, sim.trans.h, dt, sim.rng, sim.step_index)
        dsmc.inject_open_boundaries(
            sim.ens, sim.field, sim.trans.h, dt, sim.rng, sim.step_index, sim.boundaries
        )
        # (4) weights follow the moved particles: h = 0 cells shed them
        dsmc.rescale_weights(sim.ens, sim.trans.h)

    # (5) moment solve with the particle correction flux
    if plain:
        new_field = sim.field
    else:
        gk = g_flux_array(sim.ens, sim.trans.h) if sim.ens.n else None
        new_field = euler.fluid_step(
            sim.field, gk, dt, sim.trans.h, sim.boundaries, A=None
        )

    # (6) moment matching in every cell with h > 0
    if sim.mode != "euler-only" and sim.guided:
        populate_cells(sim.ens, new_field, sim.trans.h, sim.rng, sim.step_index + _POP_REMEDY)
        guide.match_all(sim.ens, new_field, sim.trans.h, sim.rng, sim.step_index)

    # (7) coupled collision step against the fluid remainder
    if sim.mode != "euler-only" and sim.ens.n:
        if sim.mode == "full-dsmc":
            rem = ConservedField(
                sim.field.grid,
                np.zeros_like(new_field.rho),
                np.zeros_like(new_field.mom),
                np.zeros_like(new_field.en),
            )
            mu = mu_n
        else:
            kin = field_moments(sim.ens, sim.trans.h)
            rem = ConservedField(
                sim.field.grid,
                new_field.rho - kin.rho,
                new_field.mom - kin.mom,
                new_field.en - kin.en,
            )
            mu = mu_n
        params = dsmc.CollisionParams(epsilon=sim.eps_field, mu=mu)
        dsmc.collide_ensemble(sim.ens, rem, sim.trans.h, params, dt, sim.rng, sim.step_index)

    # (8) advance
    if plain:
        sim.field = field_moments(sim.ens, sim.trans.h)
    else:
        sim.field = new_field
    sim.time += dt
    sim.step_index += 1
    return sim
