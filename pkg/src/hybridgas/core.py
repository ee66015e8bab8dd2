"""Domain types and Maxwellian algebra shared by all solvers.

Conventions used throughout the package:

* gas constant R = 1, so theta = T and all quantities are dimensionless;
* specific energy e = |u|^2/2 + (3/2) theta, conserved triple (rho, rho*u, rho*e);
* flux moment vectors carry the *halved* energy component <v_x |v|^2/2 .>
  so that the conserved energy density is exactly rho*e.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import NonPhysicalState

GAMMA = 5.0 / 3.0
THETA_TOL = 1e-9  # negative theta beyond this is an error, within it clamps to 0

# ---------------------------------------------------------------------------
# Counter-based RNG plumbing.
#
# All stochastic decisions are either (a) drawn from a numpy Generator seeded
# by (seed, stage, step, cell) or (b) computed as a pure hash of
# (seed, stage, step, cell, draw, id).  Both give bit-exact reproducibility
# for a fixed seed and call sequence, independent of how work is scheduled.
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# per-stage tags for substream derivation
STAGE_INIT = 1
STAGE_POPULATE = 2
STAGE_INJECT = 3
STAGE_MATCH = 4
STAGE_COLLIDE = 5


def _mix64_int(z: int) -> int:
    """splitmix64 finalizer on a Python int, masked to 64 bits."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_key(seed: int, *parts: int) -> int:
    """Collapse (seed, parts...) into a single 64-bit stream key."""
    k = _mix64_int(seed + _GOLD)
    for p in parts:
        k = _mix64_int(k ^ ((int(p) * _GOLD + _MIX2) & _MASK))
    return k


def _mix64_arr(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, mutating its (owned) uint64 input."""
    t = z >> np.uint64(30)
    z ^= t
    z *= np.uint64(_MIX1)
    np.right_shift(z, np.uint64(27), out=t)
    z ^= t
    z *= np.uint64(_MIX2)
    np.right_shift(z, np.uint64(31), out=t)
    z ^= t
    return z


def keyed_uniforms(key: int, ids: np.ndarray) -> np.ndarray:
    """One uniform in the open interval (0,1) per id, as a pure hash of (key, id).

    Permutation-covariant: the draw attached to an id does not depend on the
    position of that id in the input array.
    """
    h = np.asarray(ids).astype(np.uint64)  # owned copy
    h *= np.uint64(_GOLD)
    h ^= np.uint64(key)
    h = _mix64_arr(h)
    # 53 high bits, offset by half an ulp: never exactly 0 or 1
    h >>= np.uint64(11)
    u = h.astype(np.float64)
    u += 0.5
    u *= 2.0**-53
    return u


def keyed_normals(key: int, ids: np.ndarray) -> np.ndarray:
    """Standard normals via the inverse CDF of keyed_uniforms."""
    return ndtri(keyed_uniforms(key, ids))


def _unit_open(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms in (0,1) from a Generator (inverse-CDF safe)."""
    return (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class RngStream:
    """Root of all randomness for one run.

    Identical seed plus identical call sequence gives identical draws.
    Substreams are derived from (stage, step, cell) so per-cell work is
    reproducible regardless of scheduling.
    """

    seed: int

    def key(self, *parts: int) -> int:
        return derive_key(self.seed, *parts)

    def generator(self, *parts: int) -> np.random.Generator:
        return np.random.default_rng(np.random.PCG64(self.key(*parts)))


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1D grid over [x_min, x_max] with n_cells cells."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.n_cells > 0):
            raise ValueError("grid requires x_max > x_min and n_cells > 0")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Cell index of each position; half-open cells, x_max goes to the last cell."""
        idx = np.floor((np.asarray(x) - self.x_min) / self.dx).astype(np.int64)
        return np.clip(idx, 0, self.n_cells - 1)


# ---------------------------------------------------------------------------
# Conserved states and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConservedState:
    """Cell-local conserved triple (rho, rho*u vector, rho*e)."""

    rho: float
    mom: np.ndarray  # shape (3,)
    en: float

    def __post_init__(self):
        object.__setattr__(self, "mom", np.asarray(self.mom, dtype=np.float64).reshape(3))


def make_state(rho: float, u, theta: float) -> ConservedState:
    """Assemble a conserved state from primitive variables."""
    u = np.asarray(u, dtype=np.float64).reshape(3)
    e = 0.5 * float(u @ u) + 1.5 * theta
    return ConservedState(rho=rho, mom=rho * u, en=rho * e)


def primitives(s: ConservedState):
    """Extract (rho, u, theta, e); theta = (2e - |u|^2)/3, clamped near zero.

    Raises NonPhysicalState for rho <= 0 or theta < -1e-9.
    """
    if not s.rho > 0.0:
        raise NonPhysicalState(f"rho = {s.rho} is not positive")
    u = s.mom / s.rho
    e = s.en / s.rho
    theta = (2.0 * e - float(u @ u)) / 3.0
    if theta < -THETA_TOL:
        raise NonPhysicalState(f"theta = {theta} below tolerance")
    if theta < 0.0:
        theta = 0.0
    return s.rho, u, theta, e


class ConservedField:
    """Per-cell conserved states stored as flat arrays."""

    __slots__ = ("grid", "rho", "mom", "en")

    def __init__(self, grid: GridSpec, rho: np.ndarray, mom: np.ndarray, en: np.ndarray):
        n = grid.n_cells
        self.grid = grid
        self.rho = np.asarray(rho, dtype=np.float64).reshape(n)
        self.mom = np.asarray(mom, dtype=np.float64).reshape(n, 3)
        self.en = np.asarray(en, dtype=np.float64).reshape(n)

    @classmethod
    def from_primitives(cls, grid: GridSpec, rho, u, theta) -> "ConservedField":
        rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (grid.n_cells,)).copy()
        u = np.broadcast_to(np.asarray(u, dtype=np.float64), (grid.n_cells, 3)).copy()
        theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (grid.n_cells,)).copy()
        e = 0.5 * np.einsum("ij,ij->i", u, u) + 1.5 * theta
        return cls(grid, rho, rho[:, None] * u, rho * e)

    def copy(self) -> "ConservedField":
        return ConservedField(self.grid, self.rho.copy(), self.mom.copy(), self.en.copy())

    def state(self, j: int) -> ConservedState:
        return ConservedState(float(self.rho[j]), self.mom[j].copy(), float(self.en[j]))

    def primitives(self):
        """Vectorized (rho, u, theta, e); zero-density cells give zero primitives."""
        safe = np.where(self.rho > 0.0, self.rho, 1.0)
        u = np.where(self.rho[:, None] > 0.0, self.mom / safe[:, None], 0.0)
        e = np.where(self.rho > 0.0, self.en / safe, 0.0)
        theta = (2.0 * e - np.einsum("ij,ij->i", u, u)) / 3.0
        theta = np.where(theta < 0.0, 0.0, theta)
        return self.rho, u, theta, e

    def validate(self):
        """Raise NonPhysicalState if any cell is unphysical."""
        if np.any(self.rho <= 0.0):
            j = int(np.argmax(self.rho <= 0.0))
            raise NonPhysicalState(f"cell {j}: rho = {self.rho[j]}")
        u = self.mom / self.rho[:, None]
        e = self.en / self.rho
        theta = (2.0 * e - np.einsum("ij,ij->i", u, u)) / 3.0
        if np.any(theta < -THETA_TOL):
            j = int(np.argmax(theta < -THETA_TOL))
            raise NonPhysicalState(f"cell {j}: theta = {theta[j]}")

    def as_matrix(self) -> np.ndarray:
        """(n,5) view [rho, mom_x, mom_y, mom_z, en] (copies)."""
        return np.concatenate([self.rho[:, None], self.mom, self.en[:, None]], axis=1)

    @classmethod
    def from_matrix(cls, grid: GridSpec, m: np.ndarray) -> "ConservedField":
        return cls(grid, m[:, 0], m[:, 1:4], m[:, 4])

    def totals(self) -> np.ndarray:
        """Domain sums of the five conserved quantities (per unit dx)."""
        m = self.as_matrix()
        return m.sum(axis=0)


# ---------------------------------------------------------------------------
# Maxwellian algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxMomentVector:
    """Five moments <v_x m(v) .> with m(v) = (1, v, |v|^2/2)."""

    mass_flux: float
    mom_flux: np.ndarray  # shape (3,)
    energy_flux: float

    def __post_init__(self):
        object.__setattr__(
            self, "mom_flux", np.asarray(self.mom_flux, dtype=np.float64).reshape(3)
        )

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.mass_flux], self.mom_flux, [self.energy_flux]))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "FluxMomentVector":
        a = np.asarray(a, dtype=np.float64).reshape(5)
        return cls(float(a[0]), a[1:4].copy(), float(a[4]))


def maxwellian_flux_moments(rho: float, u, theta: float) -> FluxMomentVector:
    """Analytic flux moments of the local Maxwellian E[rho, u, theta].

    mass_flux = rho u_x, mom_flux = rho u_x u + rho theta e_x,
    energy_flux = u_x (rho e + rho theta).
    """
    u = np.asarray(u, dtype=np.float64).reshape(3)
    if rho == 0.0:
        return FluxMomentVector(0.0, np.zeros(3), 0.0)
    ux = u[0]
    p = rho * theta
    mom = rho * ux * u
    mom = mom + np.array([p, 0.0, 0.0])
    en = rho * (0.5 * float(u @ u) + 1.5 * theta)
    return FluxMomentVector(rho * ux, mom, ux * (en + p))


def maxwellian_flux_array(rho: np.ndarray, u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Vectorized maxwellian_flux_moments over a field; (n,5) output."""
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    ux = u[:, 0]
    p = rho * theta
    out = np.empty((rho.shape[0], 5))
    out[:, 0] = rho * ux
    out[:, 1:4] = (rho * ux)[:, None] * u
    out[:, 1] += p
    en = rho * (0.5 * np.einsum("ij,ij->i", u, u) + 1.5 * theta)
    out[:, 4] = ux * (en + p)
    out[rho == 0.0] = 0.0
    return out


def sample_maxwellian(u, theta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """count i.i.d. velocities from the Gaussian with mean u, variance theta per axis.

    theta = 0 returns count copies of u.  Sampling goes through the inverse
    normal CDF so that identical uniforms give identical draws.
    """
    u = np.asarray(u, dtype=np.float64).reshape(3)
    if count == 0:
        return np.empty((0, 3))
    if theta == 0.0:
        return np.tile(u, (count, 1))
    z = ndtri(_unit_open(rng, (count, 3)))
    return u + np.sqrt(theta) * z


# ---------------------------------------------------------------------------
# Particle ensemble
# ---------------------------------------------------------------------------


class ParticleEnsemble:
    """Weighted-particle representation of the kinetic part of the solution.

    Particles carry position, 3D velocity and a persistent id; the effective
    mass of a particle in cell j is h_j * m_p, implied by the transition field
    rather than stored per particle.  Arrays are kept grouped by cell index
    after each rebin, with stable (creation) order inside a cell.
    """

    __slots__ = ("grid", "m_p", "x", "v", "ids", "cell", "_next_id", "_counts", "_grouped")

    def __init__(self, grid: GridSpec, m_p: float):
        self.grid = grid
        self.m_p = float(m_p)
        self.x = np.empty(0)
        self.v = np.empty((0, 3))
        self.ids = np.empty(0, dtype=np.int64)
        self.cell = np.empty(0, dtype=np.int64)
        self._next_id = 0
        self._counts = None
        self._grouped = True

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "ParticleEnsemble":
        out = ParticleEnsemble(self.grid, self.m_p)
        out.x = self.x.copy()
        out.v = self.v.copy()
        out.ids = self.ids.copy()
        out.cell = self.cell.copy()
        out._next_id = self._next_id
        out._grouped = self._grouped
        return out

    def append(self, x: np.ndarray, v: np.ndarray) -> None:
        """Add particles with fresh ids; caller must rebin afterwards."""
        k = len(x)
        if k == 0:
            return
        new_ids = np.arange(self._next_id, self._next_id + k, dtype=np.int64)
        self._next_id += k
        self.x = np.concatenate([self.x, np.asarray(x, dtype=np.float64)])
        self.v = np.concatenate([self.v, np.asarray(v, dtype=np.float64).reshape(k, 3)])
        self.ids = np.concatenate([self.ids, new_ids])
        self.cell = np.concatenate([self.cell, self.grid.locate(x)])
        self._counts = None
        self._grouped = False

    def keep(self, mask: np.ndarray) -> None:
        self.x = self.x[mask]
        self.v = self.v[mask]
        self.ids = self.ids[mask]
        self.cell = self.cell[mask]
        self._counts = None

    def rebin(self) -> None:
        """Recompute cell indices and restore cell-grouped storage."""
        self.cell = self.grid.locate(self.x)
        order = np.argsort(self.cell, kind="stable")
        self.x = self.x[order]
        self.v = self.v[order]
        self.ids = self.ids[order]
        self.cell = self.cell[order]
        self._counts = None
        self._grouped = True

    def counts(self) -> np.ndarray:
        if self._counts is None:
            self._counts = np.bincount(self.cell, minlength=self.grid.n_cells)
        return self._counts

    def offsets(self) -> np.ndarray:
        """Start offsets of each cell segment (requires cell-grouped storage)."""
        return np.concatenate([[0], np.cumsum(self.counts())])


def _segment_sums(ens: ParticleEnsemble, values: np.ndarray) -> np.ndarray:
    """Per-cell sums of a (n_particles+1, k) matrix whose last row is zero.

    Uses contiguous reduceat segments when the ensemble is cell-grouped
    (the zero pad row makes every offset a valid index and absorbs empty
    trailing segments); falls back to bincount otherwise.
    """
    n = ens.grid.n_cells
    counts = ens.counts()
    if ens._grouped:
        out = np.add.reduceat(values, ens.offsets()[:-1], axis=0)
        out[counts == 0] = 0.0
        return out
    out = np.empty((n, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(ens.cell, weights=values[:-1, k], minlength=n)
    return out


def velocity_sums(ens: ParticleEnsemble):
    """(counts, sum of v per cell (n,3), sum of |v|^2/2 per cell (n,))."""
    if ens.n == 0:
        n = ens.grid.n_cells
        return ens.counts(), np.zeros((n, 3)), np.zeros(n)
    W = np.empty((ens.n + 1, 4))
    W[-1] = 0.0
    W[:-1, 0:3] = ens.v
    W[:-1, 3] = 0.5 * np.einsum("ij,ij->i", ens.v, ens.v)
    sums = _segment_sums(ens, W)
    return ens.counts(), sums[:, 0:3], sums[:, 3]


def field_moments(ens: ParticleEnsemble, h_field: np.ndarray) -> ConservedField:
    """Per-cell conserved moments of the weighted particle distribution.

    rho_j = h_j m_p N_j / dx and similarly for momentum and energy; empty
    cells give exact zeros.
    """
    w = np.asarray(h_field, dtype=np.float64) * ens.m_p / ens.grid.dx
    counts, sum_v, sum_sq = velocity_sums(ens)
    return ConservedField(ens.grid, w * counts, w[:, None] * sum_v, w * sum_sq)


def cell_moments(ens: ParticleEnsemble, h_field: np.ndarray, j: int) -> ConservedState:
    """Conserved moments of the particles in cell j (zeros when empty)."""
    sel = ens.cell == j
    w = float(np.asarray(h_field)[j]) * ens.m_p / ens.grid.dx
    if not np.any(sel):
        return ConservedState(0.0, np.zeros(3), 0.0)
    v = ens.v[sel]
    return ConservedState(
        rho=w * v.shape[0],
        mom=w * v.sum(axis=0),
        en=w * 0.5 * float(np.einsum("ij,ij->", v, v)),
    )


def g_flux_array(ens: ParticleEnsemble, h_field: np.ndarray) -> np.ndarray:
    """Per-cell non-equilibrium flux moments <v_x m(v) g_K>, shape (n,5).

    Computed as the particle flux moments of f_K minus the analytic Maxwellian
    flux moments of the particle conserved moments; exact zeros in empty cells.
    """
    n = ens.grid.n_cells
    w = np.asarray(h_field, dtype=np.float64) * ens.m_p / ens.grid.dx
    if ens.n == 0:
        return np.zeros((n, 5))
    # one pass: velocity moments (cols 0-3) and flux moments (cols 4-7)
    W = np.empty((ens.n + 1, 8))
    W[-1] = 0.0
    W[:-1, 0:3] = ens.v
    sq = 0.5 * np.einsum("ij,ij->i", ens.v, ens.v)
    W[:-1, 3] = sq
    vx = ens.v[:, 0]
    W[:-1, 4:7] = ens.v * vx[:, None]
    W[:-1, 7] = vx * sq
    sums = _segment_sums(ens, W)
    counts = ens.counts()

    part = np.empty((n, 5))
    part[:, 0] = w * sums[:, 0]
    part[:, 1:4] = w[:, None] * sums[:, 4:7]
    part[:, 4] = w * sums[:, 7]

    mom_field = ConservedField(
        ens.grid, w * counts, w[:, None] * sums[:, 0:3], w * sums[:, 3]
    )
    rho, u, theta, _ = mom_field.primitives()
    return part - maxwellian_flux_array(rho, u, theta)


def g_flux_moments(ens: ParticleEnsemble, h_field: np.ndarray, j: int) -> FluxMomentVector:
    """<v_x m(v) g_K> for one cell."""
    return FluxMomentVector.from_array(g_flux_array(ens, h_field)[j])
