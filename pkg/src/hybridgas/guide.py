"""Moment-guided variance reduction.

Per-cell matching of particle moments to the target h * rho^{n+1} from the
moment solver: density is restored by discarding or replicating particles
(stochastic rounding keeps the expectation exact), then mean velocity and
specific energy are matched exactly by a linear transform of the samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    STAGE_MATCH,
    ConservedField,
    ConservedState,
    ParticleEnsemble,
    RngStream,
    keyed_uniforms,
    primitives,
    velocity_sums,
)
from .errors import DegenerateSample, EmptySource

_VAR_FLOOR = 1e-14

# draw tags inside the matching stage
_D_COUNT = 0
_D_DELETE = 1
_D_PICK = 2
_D_PLACE = 3


@dataclass(frozen=True)
class MomentEstimate:
    """Specific moments of one cell's velocities: mass density, mean velocity,
    mean energy (1/N) sum |V|^2 / 2."""

    mu0: float
    mu1: np.ndarray
    mu2: float

    @classmethod
    def from_velocities(cls, v: np.ndarray, mass_density: float = 0.0) -> "MomentEstimate":
        v = np.asarray(v, dtype=np.float64).reshape(-1, 3)
        if v.shape[0] == 0:
            return cls(mass_density, np.zeros(3), 0.0)
        return cls(
            mass_density,
            v.mean(axis=0),
            0.5 * float(np.einsum("ij,ij->", v, v)) / v.shape[0],
        )


def stochastic_round(x: float, rng: np.random.Generator) -> int:
    """floor(x)+1 with probability frac(x), else floor(x); expectation is x."""
    if x < 0:
        raise ValueError("stochastic_round requires x >= 0")
    base = int(np.floor(x))
    frac = x - base
    if frac > 0.0 and rng.random() < frac:
        return base + 1
    return base


def _stochastic_round_keyed(x: np.ndarray, key: int, idx: np.ndarray) -> np.ndarray:
    base = np.floor(x)
    frac = x - base
    u = keyed_uniforms(key, idx)
    return (base + (u < frac)).astype(np.int64)


def match_velocity_energy(velocities: np.ndarray, sigma1, sigma2: float) -> np.ndarray:
    """Transform V -> (V - mu1)/c + sigma1 with c^2 = (2mu2-|mu1|^2)/(2sigma2-|sigma1|^2).

    Afterwards the empirical mean velocity and specific energy equal
    (sigma1, sigma2) to machine precision.  Fewer than 2 particles are
    returned unchanged; a vanishing sample variance with different targets
    raises DegenerateSample.
    """
    v = np.asarray(velocities, dtype=np.float64).reshape(-1, 3)
    if v.shape[0] < 2:
        return v.copy()
    sigma1 = np.asarray(sigma1, dtype=np.float64).reshape(3)
    est = MomentEstimate.from_velocities(v)
    var_s = 2.0 * est.mu2 - float(est.mu1 @ est.mu1)
    var_t = 2.0 * sigma2 - float(sigma1 @ sigma1)
    if var_t < -_VAR_FLOOR:
        raise DegenerateSample(f"target variance {var_t} is negative")
    if var_s <= _VAR_FLOOR:
        same = abs(var_t - var_s) <= 1e-12 and np.allclose(est.mu1, sigma1, atol=1e-12)
        if same:
            return v.copy()
        raise DegenerateSample("sample variance vanished but targets differ")
    if var_t <= _VAR_FLOOR:
        return np.tile(sigma1, (v.shape[0], 1))
    c = np.sqrt(var_s / var_t)
    return (v - est.mu1) / c + sigma1


def match_density(
    x: np.ndarray,
    v: np.ndarray,
    sigma0: float,
    h_j: float,
    m_p: float,
    dx: float,
    x_lo: float,
    rng: np.random.Generator,
):
    """Discard or replicate particles so the cell mass density approaches sigma0.

    sigma0 is the target already scaled by h.  Deletion is uniform without
    replacement; replication is uniform with replacement, and the copies are
    relocated uniformly inside the cell.  The residual mass mismatch is below
    one particle mass h_j * m_p / dx.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64).reshape(-1, 3)
    if h_j == 0.0:
        return x.copy(), v.copy()
    w = h_j * m_p / dx
    mu0 = w * x.shape[0]
    if mu0 == 0.0:
        if sigma0 > _VAR_FLOOR:
            raise EmptySource("cannot replicate from an empty cell")
        return x.copy(), v.copy()
    if mu0 > sigma0:
        n_del = stochastic_round((mu0 - sigma0) / w, rng)
        n_del = min(n_del, x.shape[0])
        if n_del == 0:
            return x.copy(), v.copy()
        drop = rng.choice(x.shape[0], size=n_del, replace=False)
        keep = np.ones(x.shape[0], dtype=bool)
        keep[drop] = False
        return x[keep], v[keep]
    n_rep = stochastic_round((sigma0 - mu0) / w, rng)
    if n_rep == 0:
        return x.copy(), v.copy()
    pick = rng.integers(0, x.shape[0], size=n_rep)
    new_x = x_lo + rng.random(n_rep) * dx
    return np.concatenate([x, new_x]), np.concatenate([v, v[pick]])


def match_cell(
    x: np.ndarray,
    v: np.ndarray,
    target: ConservedState,
    h_j: float,
    m_p: float,
    dx: float,
    x_lo: float,
    rng: np.random.Generator,
):
    """Full per-cell matching against h_j * target: density first, then
    velocity/energy (skipped below 2 particles).  No-op when h_j = 0."""
    if h_j == 0.0:
        return np.asarray(x, dtype=float).copy(), np.asarray(v, dtype=float).reshape(-1, 3).copy()
    _, u_t, _, e_t = primitives(target)
    x, v = match_density(x, v, h_j * target.rho, h_j, m_p, dx, x_lo, rng)
    if v.shape[0] >= 2:
        v = match_velocity_energy(v, u_t, e_t)
    return x, v


# ---------------------------------------------------------------------------
# ensemble-level matching used by the coupling orchestrator
# ---------------------------------------------------------------------------


def match_all(
    ens: ParticleEnsemble,
    target: ConservedField,
    h_field: np.ndarray,
    rng: RngStream,
    step: int,
) -> None:
    """Match every cell with h > 0 against h * target, in place.

    Counter-based draws keyed by (seed, stage, step, cell) make the result
    independent of the order cells are processed in.
    """
    grid = ens.grid
    n = grid.n_cells
    dx = grid.dx
    h = np.asarray(h_field, dtype=np.float64)
    active = h > 0.0
    if not np.any(active):
        return
    counts = ens.counts()

    w = np.where(active, h, 1.0) * ens.m_p / dx
    mu0 = np.where(active, h * ens.m_p * counts / dx, 0.0)
    sigma0 = np.where(active, h * target.rho, 0.0)

    # an empty cell is a valid representation of any target below one
    # particle mass; beyond that there is nothing to replicate from
    empty_demand = active & (counts == 0) & (sigma0 >= w)
    if np.any(empty_demand):
        j = int(np.argmax(empty_demand))
        raise EmptySource(f"cell {j} has no particles but target density {sigma0[j]}")

    diff = sigma0 - mu0
    n_change = _stochastic_round_keyed(
        np.abs(diff) / w, rng.key(STAGE_MATCH, step, _D_COUNT), np.arange(n)
    )
    n_change[~active] = 0
    n_del = np.where(diff < 0, np.minimum(n_change, counts), 0)
    n_rep = np.where((diff > 0) & (counts > 0), n_change, 0)

    offsets = ens.offsets()
    v_snapshot = ens.v  # keep() rebinds the arrays, so this stays intact
    changed = False
    if np.any(n_del > 0):
        # rank particles inside each affected cell by a keyed uniform; drop
        # the n_del lowest ranks (uniform without replacement)
        u_del = keyed_uniforms(rng.key(STAGE_MATCH, step, _D_DELETE), ens.ids)
        keep = np.ones(ens.n, dtype=bool)
        for j in np.flatnonzero(n_del > 0):
            seg = slice(offsets[j], offsets[j + 1])
            local = np.argpartition(u_del[seg], n_del[j] - 1)[: n_del[j]]
            keep[offsets[j] + local] = False
        ens.keep(keep)
        changed = True

    total_rep = int(n_rep.sum())
    if total_rep:
        cell_of = np.repeat(np.arange(n), n_rep)
        rep_off = np.concatenate([[0], np.cumsum(n_rep)])
        slot = np.arange(total_rep) - np.repeat(rep_off[:-1], n_rep)
        tag = (cell_of.astype(np.int64) << 24) | slot
        u_pick = keyed_uniforms(rng.key(STAGE_MATCH, step, _D_PICK), tag)
        u_place = keyed_uniforms(rng.key(STAGE_MATCH, step, _D_PLACE), tag)
        pick = np.minimum((u_pick * counts[cell_of]).astype(np.int64), counts[cell_of] - 1)
        src = offsets[cell_of] + pick  # pre-deletion snapshot indices
        rep_v = v_snapshot[src]
        rep_x = grid.x_min + (cell_of + u_place) * dx
        ens.append(rep_x, rep_v)
        changed = True

    if changed:
        ens.rebin()
        counts = ens.counts()

    # velocity/energy matching on the density-adjusted ensemble
    rho_t, u_t, theta_t, e_t = target.primitives()
    counts, sum_v, sum_sq = velocity_sums(ens)
    safe = np.maximum(counts, 1)
    mu1 = sum_v / safe[:, None]
    mu2 = sum_sq / safe

    var_s = 2.0 * mu2 - np.einsum("ij,ij->i", mu1, mu1)
    var_t = 2.0 * e_t - np.einsum("ij,ij->i", u_t, u_t)
    eligible = active & (counts >= 2)
    degenerate = eligible & (var_s <= _VAR_FLOOR)
    if np.any(degenerate):
        bad = degenerate & (
            (np.abs(var_t - var_s) > 1e-12)
            | (np.abs(u_t - mu1).max(axis=1) > 1e-12)
        )
        if np.any(bad):
            raise DegenerateSample(f"cell {int(np.argmax(bad))}: zero sample variance")
        eligible &= ~degenerate

    flat_target = eligible & (var_t <= _VAR_FLOOR)
    scaled = eligible & ~flat_target
    if np.any(scaled):
        # V* = V/c + (sigma1 - mu1/c), as per-cell scale and offset
        inv_c = np.zeros(n)
        inv_c[scaled] = np.sqrt(var_t[scaled] / var_s[scaled])
        shift = u_t - mu1 * inv_c[:, None]
        pc = ens.cell
        sel = scaled[pc]
        if np.all(sel):
            ens.v *= inv_c[pc][:, None]
            ens.v += shift[pc]
        else:
            cells = pc[sel]
            ens.v[sel] = ens.v[sel] * inv_c[cells][:, None] + shift[cells]
    self_flat = flat_target[ens.cell]
    if np.any(self_flat):
        ens.v[self_flat] = u_t[ens.cell[self_flat]]
