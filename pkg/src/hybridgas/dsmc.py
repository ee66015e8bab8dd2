"""Particle solver for the kinetic part of the coupled model.

Time splitting: free transport with specular or open walls, implicit weight
rescaling through the transition field, reservoir injection at buffer edges,
and a forward-Euler collision step (plain Nanbu with an equilibrium virtual
reservoir standing in for the fluid remainder).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    STAGE_COLLIDE,
    STAGE_INJECT,
    ConservedField,
    ConservedState,
    ParticleEnsemble,
    RngStream,
    keyed_normals,
    keyed_uniforms,
    sample_maxwellian,
)
from .errors import InvalidProbability

_P_TOL = 1e-12

# draw tags inside the collision stage
_D_NVIRT = 0
_D_VIRT = 1  # tags 1,2,3 for the three velocity components
_D_DECIDE = 4
_D_PARTNER = 5
_D_COSTHETA = 6
_D_PHI = 7

# draw tags inside the injection stage
_D_INJ_POS = 0
_D_INJ_VEL = 1  # tags 1,2,3


@dataclass(frozen=True)
class WallBoundary:
    """Domain edge: specular reflection or open (particles leaving are removed)."""

    position: float
    kind: str  # "reflecting" | "open"
    side: str  # "left" | "right"

    def __post_init__(self):
        if self.kind not in ("reflecting", "open"):
            raise ValueError(f"unknown wall kind {self.kind!r}")
        if self.side not in ("left", "right"):
            raise ValueError(f"unknown wall side {self.side!r}")


@dataclass
class CollisionParams:
    """Relaxation parameter and collision rate; mu = rho for Maxwellian molecules."""

    epsilon: np.ndarray | float
    mu: np.ndarray | float


def transport(ens: ParticleEnsemble, dt: float, boundaries: Sequence[WallBoundary]) -> ParticleEnsemble:
    """Move x <- x + v_x dt, fold at reflecting walls, drop particles past open ones."""
    if dt == 0.0 or ens.n == 0:
        return ens
    ens.x = ens.x + ens.v[:, 0] * dt
    reflecting = [w for w in boundaries if w.kind == "reflecting"]
    for _ in range(64):
        folded = False
        for w in reflecting:
            if w.side == "left":
                mask = ens.x < w.position
            else:
                mask = ens.x > w.position
            if np.any(mask):
                folded = True
                ens.x[mask] = 2.0 * w.position - ens.x[mask]
                ens.v[mask, 0] = -ens.v[mask, 0]
        if not folded:
            break
    else:
        raise RuntimeError("specular folding did not converge")
    keep = np.ones(ens.n, dtype=bool)
    for w in boundaries:
        if w.kind == "open":
            keep &= (ens.x >= w.position) if w.side == "left" else (ens.x <= w.position)
    if not np.all(keep):
        ens.keep(keep)
    ens.rebin()
    return ens


def rescale_weights(ens: ParticleEnsemble, h_new: np.ndarray) -> ParticleEnsemble:
    """Remove the now-weightless particles sitting in cells with h = 0.

    Weights themselves are implicit (h_j * m_p), so nothing else changes.
    """
    if ens.n == 0:
        return ens
    keep = np.asarray(h_new, dtype=np.float64)[ens.cell] > 0.0
    if not np.all(keep):
        ens.keep(keep)
    return ens


def inject_reservoir(
    ens: ParticleEnsemble,
    fluid_field: ConservedField,
    h_field: np.ndarray,
    dt: float,
    rng: RngStream,
    step: int = 0,
) -> ParticleEnsemble:
    """Sample equilibrium particles in the first fluid cell beyond each buffer
    edge, move them for dt, and keep those that landed in cells with h > 0.

    The kept particles are appended to the ensemble at their moved positions;
    everything else is discarded.
    """
    h = np.asarray(h_field, dtype=np.float64)
    n = ens.grid.n_cells
    if not (np.any(h > 0.0) and np.any(h == 0.0)):
        return ens
    dx = ens.grid.dx
    rho, u, theta, _ = fluid_field.primitives()
    zero = h == 0.0
    near = np.zeros(n, dtype=bool)
    near[:-1] |= zero[:-1] & (h[1:] > 0.0)
    near[1:] |= zero[1:] & (h[:-1] > 0.0)
    new_x, new_v = [], []
    for g in np.flatnonzero(near):
        count = int(np.floor(rho[g] * dx / ens.m_p + 0.5))
        if count == 0 or theta[g] <= 0.0 and u[g, 0] == 0.0:
            continue
        slots = np.arange(count)
        xs = ens.grid.x_min + (g + keyed_uniforms(rng.key(STAGE_INJECT, step, _D_INJ_POS, g), slots)) * dx
        vs = np.empty((count, 3))
        for k in range(3):
            vs[:, k] = keyed_normals(rng.key(STAGE_INJECT, step, _D_INJ_VEL + k, g), slots)
        vs = u[g] + np.sqrt(theta[g]) * vs
        xm = xs + vs[:, 0] * dt
        inside = (xm >= ens.grid.x_min) & (xm <= ens.grid.x_max)
        landed = np.zeros(count, dtype=bool)
        landed[inside] = h[ens.grid.locate(xm[inside])] > 0.0
        if np.any(landed):
            new_x.append(xm[landed])
            new_v.append(vs[landed])
    if new_x:
        ens.append(np.concatenate(new_x), np.concatenate(new_v))
        ens.rebin()
    return ens


def inject_open_boundaries(
    ens: ParticleEnsemble,
    fluid_field: ConservedField,
    h_field: np.ndarray,
    dt: float,
    rng: RngStream,
    step: int = 0,
    boundaries=("open", "open"),
) -> ParticleEnsemble:
    """Equilibrium influx through open domain edges whose edge cell is kinetic.

    A virtual exterior ghost cell carrying the zero-gradient edge state is
    sampled exactly like a buffer-edge reservoir; entrants that land inside
    the domain in a cell with h > 0 are kept.  Without this, a kinetic region
    touching an open boundary sees outflow with no compensating inflow and
    its velocity distribution (hence the g correction flux) becomes one-sided.
    """
    h = np.asarray(h_field, dtype=np.float64)
    n = ens.grid.n_cells
    dx = ens.grid.dx
    rho, u, theta, _ = fluid_field.primitives()
    sides = []
    if boundaries[0] == "open" and h[0] > 0.0:
        sides.append((0, ens.grid.x_min - dx, n))  # ghost key past real cell range
    if boundaries[1] == "open" and h[n - 1] > 0.0:
        sides.append((n - 1, ens.grid.x_max, n + 1))
    new_x, new_v = [], []
    for edge, ghost_lo, key_cell in sides:
        count = int(np.floor(rho[edge] * dx / ens.m_p + 0.5))
        if count == 0:
            continue
        slots = np.arange(count)
        xs = ghost_lo + keyed_uniforms(rng.key(STAGE_INJECT, step, _D_INJ_POS, key_cell), slots) * dx
        vs = np.empty((count, 3))
        for k in range(3):
            vs[:, k] = keyed_normals(rng.key(STAGE_INJECT, step, _D_INJ_VEL + k, key_cell), slots)
        vs = u[edge] + np.sqrt(theta[edge]) * vs
        xm = xs + vs[:, 0] * dt
        inside = (xm >= ens.grid.x_min) & (xm <= ens.grid.x_max)
        landed = np.zeros(count, dtype=bool)
        landed[inside] = h[ens.grid.locate(xm[inside])] > 0.0
        if np.any(landed):
            new_x.append(xm[landed])
            new_v.append(vs[landed])
    if new_x:
        ens.append(np.concatenate(new_x), np.concatenate(new_v))
        ens.rebin()
    return ens


def scatter(v: np.ndarray, v_star: np.ndarray, n: np.ndarray):
    """Post-collision velocities v' = (v+v*+|q|n)/2, v*' = (v+v*-|q|n)/2."""
    v = np.asarray(v, dtype=np.float64)
    v_star = np.asarray(v_star, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    q = v - v_star
    qn = np.linalg.norm(q, axis=-1, keepdims=True)
    center = 0.5 * (v + v_star)
    half = 0.5 * qn * n
    return center + half, center - half


def _unit_sphere(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Uniform directions on S^2 from two uniforms (isotropic kernel b0)."""
    z = 2.0 * u1 - 1.0
    phi = 2.0 * np.pi * u2
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def binary_collision(v, v_star, rng: np.random.Generator):
    """Sample an isotropic scattering direction and return (v', v*').

    Conserves v + v* and |v|^2 + |v*|^2 exactly for every draw.  Accepts
    single velocities or (k,3) batches.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    v_star = np.atleast_2d(np.asarray(v_star, dtype=np.float64))
    n = _unit_sphere(rng.random(v.shape[0]), rng.random(v.shape[0]))
    vp, vsp = scatter(v, v_star, n)
    if single:
        return vp[0], vsp[0]
    return vp, vsp


def _collide_grouped(
    v: np.ndarray,
    ids: np.ndarray,
    cells: np.ndarray,
    offsets: np.ndarray,
    counts: np.ndarray,
    p_cell: np.ndarray,
    n_virt: np.ndarray,
    virt_u: np.ndarray,
    virt_theta: np.ndarray,
    rng: RngStream,
    step: int,
) -> np.ndarray:
    """Vectorized one-sided Nanbu update on cell-grouped velocity arrays.

    Every colliding particle picks a partner uniformly from the pre-collision
    pool of its cell (real particles in stored order plus the virtual
    reservoir) excluding itself, and takes the v' branch of the scattering.
    All randomness is a pure function of (seed, step, particle id) or, for
    the reservoir, (seed, step, cell, slot): outcomes are independent of
    particle ordering.
    """
    n_cells = counts.shape[0]
    total_virt = int(n_virt.sum())
    if total_virt:
        virt_cell = np.repeat(np.arange(n_cells), n_virt)
        virt_off = np.concatenate([[0], np.cumsum(n_virt)])
        slot = np.arange(total_virt) - np.repeat(virt_off[:-1], n_virt)
        tag = (virt_cell.astype(np.int64) << 24) | slot
        zv = np.empty((total_virt, 3))
        for k in range(3):
            zv[:, k] = keyed_normals(rng.key(STAGE_COLLIDE, step, _D_VIRT + k), tag)
        virt_v = virt_u[virt_cell] + np.sqrt(virt_theta[virt_cell])[:, None] * zv
    else:
        virt_off = np.zeros(n_cells + 1, dtype=np.int64)
        virt_v = np.empty((0, 3))

    pool = counts[cells] + n_virt[cells]
    avail = pool - 1
    u_dec = keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_DECIDE), ids)
    hit = (u_dec < p_cell[cells]) & (avail >= 1)
    if not np.any(hit):
        return v

    idx = np.flatnonzero(hit)
    c = cells[idx]
    u_par = keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_PARTNER), ids[idx])
    k = (u_par * avail[idx]).astype(np.int64)
    k = np.minimum(k, avail[idx] - 1)
    local_self = idx - offsets[c]
    k = k + (k >= local_self)

    partner_v = np.empty((idx.shape[0], 3))
    real = k < counts[c]
    partner_v[real] = v[offsets[c[real]] + k[real]]
    if np.any(~real):
        partner_v[~real] = virt_v[virt_off[c[~real]] + (k[~real] - counts[c[~real]])]

    nvec = _unit_sphere(
        keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_COSTHETA), ids[idx]),
        keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_PHI), ids[idx]),
    )
    vp, _ = scatter(v[idx], partner_v, nvec)
    out = v.copy()
    out[idx] = vp
    return out


def collide_ensemble(
    ens: ParticleEnsemble,
    remainder: ConservedField,
    h_field: np.ndarray,
    params: CollisionParams,
    dt: float,
    rng: RngStream,
    step: int = 0,
) -> ParticleEnsemble:
    """Coupled collision step over all cells (requires cell-grouped storage).

    remainder holds the fluid part rho_F = rho^{n+1} - rho_K; its negative
    densities (one-particle matching noise) are clipped to zero.
    """
    if ens.n == 0:
        return ens
    n = ens.grid.n_cells
    h = np.asarray(h_field, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(params.epsilon, dtype=np.float64), (n,))
    mu = np.broadcast_to(np.asarray(params.mu, dtype=np.float64), (n,))
    p_cell = h * mu * dt / eps
    if np.any(p_cell > 1.0 + _P_TOL):
        j = int(np.argmax(p_cell))
        raise InvalidProbability(f"cell {j}: h*mu*dt/eps = {p_cell[j]}")
    p_cell = np.minimum(p_cell, 1.0)

    rho_f, u_f, theta_f, _ = remainder.primitives()
    rho_f = np.maximum(rho_f, 0.0)
    counts = ens.counts()
    active = (p_cell > 0.0) & (counts > 0)
    demand = np.where(active, rho_f * ens.grid.dx / ens.m_p, 0.0)
    base = np.floor(demand)
    frac = demand - base
    u_round = keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_NVIRT), np.arange(n))
    n_virt = (base + (u_round < frac)).astype(np.int64)

    ens.v = _collide_grouped(
        ens.v, ens.ids, ens.cell, ens.offsets(), counts, p_cell, n_virt, u_f, theta_f, rng, step
    )
    return ens


def collide_cell(
    velocities: np.ndarray,
    ids: np.ndarray | None,
    fluid_remainder: ConservedState | None,
    h_j: float,
    params: CollisionParams,
    dt: float,
    m_p: float,
    dx: float,
    rng: RngStream,
    step: int = 0,
) -> np.ndarray:
    """Collision step for one cell's velocities; returns them in input order.

    fluid_remainder is the conserved remainder state rho_F for the cell
    (None or zero density means a classical Nanbu step on the real particles
    alone).  Randomness is keyed by the per-particle ids, so any permutation
    of (velocities, ids) yields the identical result.
    """
    v = np.asarray(velocities, dtype=np.float64).reshape(-1, 3)
    k = v.shape[0]
    if k == 0 or h_j == 0.0:
        return v.copy()
    ids = np.arange(k, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    eps = float(np.ravel(params.epsilon)[0])
    mu = float(np.ravel(params.mu)[0])
    p = h_j * mu * dt / eps
    if p > 1.0 + _P_TOL:
        raise InvalidProbability(f"h*mu*dt/eps = {p}")
    p_cell = np.array([min(p, 1.0)])

    if fluid_remainder is None or fluid_remainder.rho <= 0.0:
        n_virt = np.zeros(1, dtype=np.int64)
        u_f = np.zeros((1, 3))
        theta_f = np.zeros(1)
    else:
        from .core import primitives

        rho_f, u_fr, theta_fr, _ = primitives(fluid_remainder)
        demand = rho_f * dx / m_p
        u_round = keyed_uniforms(rng.key(STAGE_COLLIDE, step, _D_NVIRT), np.arange(1))
        n_virt = np.array([int(np.floor(demand)) + int(u_round[0] < demand - np.floor(demand))])
        u_f = u_fr[None, :]
        theta_f = np.array([theta_fr])

    sorted_v = _collide_grouped(
        v[order],
        ids[order],
        np.zeros(k, dtype=np.int64),
        np.array([0, k]),
        np.array([k]),
        p_cell,
        n_virt,
        u_f,
        theta_f,
        rng,
        step,
    )
    out = np.empty_like(v)
    out[order] = sorted_v
    return out
