"""Finite-volume solver for the moment system.

MUSCL second-order extension of a Lax-Friedrichs type flux with a transition-
function-modified van Leer limiter, plus a centered first-order flux for the
non-equilibrium correction term.  Boundary kinds: "open" (zero gradient),
"reflecting" (mirrored state, x-velocity negated) and "periodic" (test use).
"""
from __future__ import annotations

import numpy as np

from .core import GAMMA, ConservedField, FluxMomentVector, maxwellian_flux_array
from .errors import NonPhysicalState

BOUNDARY_KINDS = ("open", "reflecting", "periodic")


def max_eigenvalue(field: ConservedField) -> float:
    """Largest |u_x| + sqrt(gamma * theta) over the field."""
    field.validate()
    _, u, theta, _ = field.primitives()
    return float(np.max(np.abs(u[:, 0]) + np.sqrt(GAMMA * theta)))


def van_leer(chi):
    """van Leer limiter (|chi|+chi)/(1+chi); 0 for chi <= 0 or non-finite input."""
    chi = np.asarray(chi, dtype=np.float64)
    out = np.zeros_like(chi)
    pos = np.isfinite(chi) & (chi > 0.0)
    out[pos] = 2.0 * chi[pos] / (1.0 + chi[pos])
    return out if out.ndim else float(out)


def modified_limiter(chi, h):
    """Limiter degraded by the transition function: phi_L(chi) * (1 - h)."""
    return van_leer(chi) * (1.0 - np.asarray(h, dtype=np.float64))


def _mirror(states: np.ndarray) -> np.ndarray:
    out = states.copy()
    out[:, 1] = -out[:, 1]
    return out


def _pad_states(m: np.ndarray, boundaries) -> np.ndarray:
    """Add two ghost cells per side to an (n,5) state matrix."""
    left, right = boundaries
    if left == "periodic" or right == "periodic":
        return np.concatenate([m[-2:], m, m[:2]])
    if left == "open":
        lg = np.repeat(m[:1], 2, axis=0)
    elif left == "reflecting":
        lg = _mirror(m[1::-1])  # cells 1,0 mirrored -> ghosts -2,-1
    else:
        raise ValueError(f"unknown boundary kind {left!r}")
    if right == "open":
        rg = np.repeat(m[-1:], 2, axis=0)
    elif right == "reflecting":
        rg = _mirror(m[:-3:-1])  # cells n-1,n-2 mirrored -> ghosts n,n+1
    else:
        raise ValueError(f"unknown boundary kind {right!r}")
    return np.concatenate([lg, m, rg])


def _pad_scalar(a: np.ndarray, boundaries) -> np.ndarray:
    left, right = boundaries
    if left == "periodic" or right == "periodic":
        return np.concatenate([a[-2:], a, a[:2]])
    return np.concatenate([a[:1], a[:1], a, a[-1:], a[-1:]])


def _pad_gk(gk: np.ndarray, boundaries) -> np.ndarray:
    """Ghost non-equilibrium fluxes; reflection flips the odd-in-v_x components."""
    left, right = boundaries
    if left == "periodic" or right == "periodic":
        return np.concatenate([gk[-2:], gk, gk[:2]])
    flip = np.array([-1.0, 1.0, -1.0, -1.0, -1.0])
    if left == "open":
        lg = np.repeat(gk[:1], 2, axis=0)
    else:
        lg = gk[1::-1] * flip
    if right == "open":
        rg = np.repeat(gk[-1:], 2, axis=0)
    else:
        rg = gk[:-3:-1] * flip
    return np.concatenate([lg, gk, rg])


def _fluxes_of(m: np.ndarray) -> np.ndarray:
    """Maxwellian flux moments F(rho) for an (n,5) state matrix."""
    rho = m[:, 0]
    safe = np.where(rho > 0.0, rho, 1.0)
    u = m[:, 1:4] / safe[:, None]
    e = m[:, 4] / safe
    theta = np.maximum((2.0 * e - np.einsum("ij,ij->i", u, u)) / 3.0, 0.0)
    return maxwellian_flux_array(rho, u, theta)


def _limited_ratio_phi(dnum: np.ndarray, dden: np.ndarray, h: np.ndarray) -> np.ndarray:
    """phi_eps applied to the componentwise ratio dnum/dden.

    Degenerate components: 0/0 counts as chi = 1 (smooth field), x/0 as
    sign(x) * inf with phi_L capped at 2.
    """
    num_zero = dnum == 0.0
    den_zero = dden == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = dnum / dden
    chi = np.where(den_zero & num_zero, 1.0, chi)
    chi = np.where(den_zero & ~num_zero, np.where(dnum > 0.0, np.inf, -np.inf), chi)
    phi = np.zeros_like(chi)
    pos = chi > 0.0
    finite_pos = pos & np.isfinite(chi)
    phi[finite_pos] = 2.0 * chi[finite_pos] / (1.0 + chi[finite_pos])
    phi[pos & ~np.isfinite(chi)] = 2.0
    return phi * (1.0 - h)


def interface_fluxes(field: ConservedField, A: float, h_field: np.ndarray, boundaries) -> np.ndarray:
    """Hydrodynamic numerical fluxes psi at the n+1 cell interfaces, shape (n+1,5).

    psi_{j+1/2} = (F_j + F_{j+1})/2 - A (rho_{j+1} - rho_j)/2
                  + (sigma^+_j - sigma^-_{j+1})/4
    with sigma^{+-}_j = (w^{+-}_{j+1} - w^{+-}_j) phi_eps(chi^{+-}_j) and
    w^{+-} = F +- A rho.
    """
    n = field.grid.n_cells
    m = _pad_states(field.as_matrix(), boundaries)  # (n+4,5), cells -2..n+1
    h = _pad_scalar(np.asarray(h_field, dtype=np.float64), boundaries)[:, None]
    F = _fluxes_of(m)
    wp = F + A * m
    wm = F - A * m
    dwp = wp[1:] - wp[:-1]  # increment on interface left-indexed by cell j = -2..n
    dwm = wm[1:] - wm[:-1]
    # sigma_j needs chi_j = dw_{j-1}/dw_j, so it exists for cells -1..n
    phi_p = _limited_ratio_phi(dwp[:-1], dwp[1:], h[1:-1])
    phi_m = _limited_ratio_phi(dwm[:-1], dwm[1:], h[1:-1])
    sig_p = dwp[1:] * phi_p  # sigma^+ for cells -1..n+... indexed 0..n+1
    sig_m = dwm[1:] * phi_m
    # interfaces j+1/2 for j = -1..n-1 -> padded cell index i = j+2 in 1..n+1
    i = np.arange(1, n + 2)
    psi = 0.5 * (F[i] + F[i + 1]) - 0.5 * A * (m[i + 1] - m[i])
    psi += 0.25 * (sig_p[i - 1] - sig_m[i])
    return psi


def muscl_lf_flux(field: ConservedField, j: int, A: float, h_field, boundaries=("open", "open")) -> FluxMomentVector:
    """Single-interface psi_{j+1/2} (interface between cells j and j+1)."""
    psi = interface_fluxes(field, A, np.asarray(h_field, dtype=np.float64), boundaries)
    return FluxMomentVector.from_array(psi[j + 1])


def kinetic_interface_fluxes(gk: np.ndarray, boundaries) -> np.ndarray:
    """Centered first-order fluxes Psi of the non-equilibrium term, shape (n+1,5)."""
    g = _pad_gk(np.asarray(gk, dtype=np.float64), boundaries)
    inner = g[1:-1]  # cells -1..n
    return 0.5 * (inner[:-1] + inner[1:])


def kinetic_flux(gk_j, gk_j1) -> np.ndarray:
    """Psi_{j+1/2} = (gk_j + gk_{j+1})/2 for two cell-centered flux vectors."""
    a = gk_j.as_array() if isinstance(gk_j, FluxMomentVector) else np.asarray(gk_j, dtype=float)
    b = gk_j1.as_array() if isinstance(gk_j1, FluxMomentVector) else np.asarray(gk_j1, dtype=float)
    return 0.5 * (a + b)


def fluid_step(
    field: ConservedField,
    gk_field: np.ndarray | None,
    dt: float,
    h_field: np.ndarray,
    boundaries=("open", "open"),
    A: float | None = None,
) -> ConservedField:
    """One forward-Euler update of the moment system.

    rho^{n+1}_j = rho^n_j - dt/dx (psi_{j+1/2} - psi_{j-1/2})
                          - dt/dx (Psi_{j+1/2} - Psi_{j-1/2})

    gk_field is the (n,5) array of per-cell non-equilibrium flux moments
    (None means zero).  Raises NonPhysicalState if an updated cell has
    rho <= 0 or theta below tolerance.
    """
    grid = field.grid
    if A is None:
        A = max_eigenvalue(field)
    lam = dt / grid.dx
    psi = interface_fluxes(field, A, np.asarray(h_field, dtype=np.float64), boundaries)
    m = field.as_matrix()
    m = m - lam * (psi[1:] - psi[:-1])
    if gk_field is not None and np.any(gk_field):
        Psi = kinetic_interface_fluxes(gk_field, boundaries)
        m = m - lam * (Psi[1:] - Psi[:-1])
    out = ConservedField.from_matrix(grid, m)
    out.validate()
    return out
