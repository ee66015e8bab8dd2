"""Exact Riemann solver for the 1D compressible Euler equations.

Validation oracle for the fluid limit (independent of the finite-volume
scheme).  States are (rho, u, p) with an ideal gas of ratio gamma; the
similarity solution is sampled at xi = (x - x0) / t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RiemannState:
    rho: float
    u: float
    p: float


def _sound_speed(s: RiemannState, gamma: float) -> float:
    return np.sqrt(gamma * s.p / s.rho)


def _f_side(p: float, s: RiemannState, gamma: float):
    """Toro's f_K(p) and its derivative for one side."""
    c = _sound_speed(s, gamma)
    if p > s.p:  # shock
        a = 2.0 / ((gamma + 1.0) * s.rho)
        b = (gamma - 1.0) / (gamma + 1.0) * s.p
        q = np.sqrt(a / (p + b))
        f = (p - s.p) * q
        df = q * (1.0 - 0.5 * (p - s.p) / (p + b))
    else:  # rarefaction
        f = 2.0 * c / (gamma - 1.0) * ((p / s.p) ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
        df = 1.0 / (s.rho * c) * (p / s.p) ** (-(gamma + 1.0) / (2.0 * gamma))
    return f, df


class RiemannSolution:
    """Star-region data plus sampling of the similarity solution."""

    def __init__(self, left: RiemannState, right: RiemannState, gamma: float = 5.0 / 3.0):
        self.left = left
        self.right = right
        self.gamma = gamma
        self.p_star, self.u_star = self._solve_star()

    def _solve_star(self):
        gl, gr = self.left, self.right
        gamma = self.gamma
        du = gr.u - gl.u
        # positivity-preserving initial guess: mean pressure
        p = max(0.5 * (gl.p + gr.p), 1e-12)
        for _ in range(200):
            fl, dfl = _f_side(p, gl, gamma)
            fr, dfr = _f_side(p, gr, gamma)
            res = fl + fr + du
            step = res / (dfl + dfr)
            p_new = max(p - step, 1e-14)
            if abs(p_new - p) <= 1e-14 * max(1.0, p):
                p = p_new
                break
            p = p_new
        fl, _ = _f_side(p, gl, gamma)
        fr, _ = _f_side(p, gr, gamma)
        u = 0.5 * (gl.u + gr.u) + 0.5 * (fr - fl)
        return p, u

    def residual(self) -> float:
        """|f_L + f_R + du| at the converged star pressure."""
        fl, _ = _f_side(self.p_star, self.left, self.gamma)
        fr, _ = _f_side(self.p_star, self.right, self.gamma)
        return abs(fl + fr + (self.right.u - self.left.u))

    def _sample_one(self, xi: float):
        g = self.gamma
        gl, gr, p_s, u_s = self.left, self.right, self.p_star, self.u_star
        if xi <= u_s:  # left of the contact
            c = _sound_speed(gl, g)
            if p_s > gl.p:  # left shock
                ratio = p_s / gl.p
                sl = gl.u - c * np.sqrt((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g))
                if xi <= sl:
                    return gl.rho, gl.u, gl.p
                rho = gl.rho * ((ratio + (g - 1.0) / (g + 1.0)) / ((g - 1.0) / (g + 1.0) * ratio + 1.0))
                return rho, u_s, p_s
            # left rarefaction
            head = gl.u - c
            c_star = c * (p_s / gl.p) ** ((g - 1.0) / (2.0 * g))
            tail = u_s - c_star
            if xi <= head:
                return gl.rho, gl.u, gl.p
            if xi >= tail:
                rho = gl.rho * (p_s / gl.p) ** (1.0 / g)
                return rho, u_s, p_s
            u = 2.0 / (g + 1.0) * (c + (g - 1.0) / 2.0 * gl.u + xi)
            cf = c - (g - 1.0) / 2.0 * (u - gl.u)
            rho = gl.rho * (cf / c) ** (2.0 / (g - 1.0))
            p = gl.p * (cf / c) ** (2.0 * g / (g - 1.0))
            return rho, u, p
        # right of the contact
        c = _sound_speed(gr, g)
        if p_s > gr.p:  # right shock
            ratio = p_s / gr.p
            sr = gr.u + c * np.sqrt((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g))
            if xi >= sr:
                return gr.rho, gr.u, gr.p
            rho = gr.rho * ((ratio + (g - 1.0) / (g + 1.0)) / ((g - 1.0) / (g + 1.0) * ratio + 1.0))
            return rho, u_s, p_s
        # right rarefaction
        head = gr.u + c
        c_star = c * (p_s / gr.p) ** ((g - 1.0) / (2.0 * g))
        tail = u_s + c_star
        if xi >= head:
            return gr.rho, gr.u, gr.p
        if xi <= tail:
            rho = gr.rho * (p_s / gr.p) ** (1.0 / g)
            return rho, u_s, p_s
        u = 2.0 / (g + 1.0) * (-c + (g - 1.0) / 2.0 * gr.u + xi)
        cf = c + (g - 1.0) / 2.0 * (u - gr.u)
        rho = gr.rho * (cf / c) ** (2.0 / (g - 1.0))
        p = gr.p * (cf / c) ** (2.0 * g / (g - 1.0))
        return rho, u, p

    def sample(self, xi):
        """(rho, u, p) arrays at similarity coordinates xi = (x - x0)/t."""
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        rho = np.empty_like(xi)
        u = np.empty_like(xi)
        p = np.empty_like(xi)
        for i, s in enumerate(xi):
            rho[i], u[i], p[i] = self._sample_one(float(s))
        return rho, u, p


def solve(left, right, gamma: float = 5.0 / 3.0) -> RiemannSolution:
    """Solve for states given as (rho, u, p) triples."""
    return RiemannSolution(RiemannState(*left), RiemannState(*right), gamma)
