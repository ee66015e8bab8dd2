"""Tests for the finite-volume moment solver."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridgas import euler, riemann
from hybridgas.core import GAMMA, ConservedField, GridSpec
from hybridgas.errors import NonPhysicalState


def uniform_field(n=16, rho=1.0, ux=0.0, theta=1.0, grid=None):
    grid = grid or GridSpec(0.0, 1.0, n)
    return ConservedField.from_primitives(grid, rho, np.array([ux, 0.0, 0.0]), theta)


def sod_field(n=200):
    grid = GridSpec(0.0, 2.0, n)
    x = grid.centers()
    rho = np.where(x <= 1.0, 1.0, 0.125)
    theta = np.where(x <= 1.0, 5.0, 4.0)
    return ConservedField.from_primitives(grid, rho, np.zeros((n, 3)), theta)


class TestMaxEigenvalue:
    def test_rest_gas_sound_speed(self):
        assert euler.max_eigenvalue(uniform_field(theta=1.0)) == pytest.approx(np.sqrt(5.0 / 3.0))

    def test_moving_gas(self):
        f = uniform_field(ux=-2.0, theta=4.0)
        assert euler.max_eigenvalue(f) == pytest.approx(2.0 + np.sqrt(20.0 / 3.0))

    def test_cold_rest_gas(self):
        assert euler.max_eigenvalue(uniform_field(theta=0.0)) == 0.0


class TestVanLeer:
    def test_symmetric_slope(self):
        assert euler.van_leer(1.0) == pytest.approx(1.0)

    def test_opposite_slopes(self):
        assert euler.van_leer(-0.5) == 0.0

    def test_formula(self):
        assert euler.van_leer(3.0) == pytest.approx(1.5)

    def test_nonfinite_or_below_minus_one(self):
        assert euler.van_leer(np.nan) == 0.0
        assert euler.van_leer(-np.inf) == 0.0
        assert euler.van_leer(-2.0) == 0.0

    @given(st.floats(-100, 100, allow_nan=False))
    @settings(max_examples=80, deadline=None)
    def test_bounded(self, chi):
        phi = euler.van_leer(chi)
        assert 0.0 <= phi < 2.0
        if chi <= 0:
            assert phi == 0.0


class TestModifiedLimiter:
    def test_pure_van_leer_at_h0(self):
        assert euler.modified_limiter(1.0, 0.0) == pytest.approx(1.0)

    def test_first_order_at_h1(self):
        assert euler.modified_limiter(1.0, 1.0) == 0.0

    def test_product(self):
        assert euler.modified_limiter(3.0, 0.5) == pytest.approx(0.75)


class TestMusclFlux:
    def test_uniform_field_consistency(self):
        f = uniform_field(8, rho=1.3, ux=0.7, theta=2.0)
        A = euler.max_eigenvalue(f)
        from hybridgas.core import maxwellian_flux_moments

        # all difference terms vanish exactly: psi == F of the cell state
        same_path = euler._fluxes_of(f.as_matrix())[0]
        analytic = maxwellian_flux_moments(1.3, (0.7, 0, 0), 2.0).as_array()
        for j in range(-1, 8):
            psi = euler.muscl_lf_flux(f, j, A, np.zeros(8)).as_array()
            assert np.array_equal(psi, same_path)
            assert np.allclose(psi, analytic, rtol=1e-13, atol=1e-13)

    def test_h1_reduces_to_first_order_lf_bit_exact(self):
        # reference: plain Rusanov flux written independently
        grid = GridSpec(0.0, 1.0, 32)
        rng = np.random.default_rng(3)
        f = ConservedField.from_primitives(
            grid,
            rng.uniform(0.5, 2.0, 32),
            rng.normal(0, 0.3, (32, 3)),
            rng.uniform(0.5, 2.0, 32),
        )
        A = euler.max_eigenvalue(f)
        h1 = np.ones(32)
        m = euler._pad_states(f.as_matrix(), ("open", "open"))
        F = euler._fluxes_of(m)
        i = np.arange(1, 34)
        ref = 0.5 * (F[i] + F[i + 1]) - 0.5 * A * (m[i + 1] - m[i])
        got = euler.interface_fluxes(f, A, h1, ("open", "open"))
        assert np.array_equal(got, ref)

    def test_smooth_profile_spatial_convergence(self):
        # Entropy wave rho(x - t) at uniform u, p.  The spec asks for observed
        # order >= 1.8; the time integrator is forward Euler (first order), so
        # the spatial order is isolated with dt ~ dx^2.  At fixed CFL the
        # O(dt) error caps the observed order near 1 (see decisions ledger).
        def run(n, t_end=0.1):
            grid = GridSpec(0.0, 1.0, n)
            x = grid.centers()
            rho0 = 1.0 + 0.2 * np.sin(2 * np.pi * x)
            u0 = np.zeros((n, 3))
            u0[:, 0] = 1.0
            f = ConservedField.from_primitives(grid, rho0, u0, 1.0 / rho0)
            h = np.zeros(n)
            t = 0.0
            while t < t_end - 1e-14:
                A = euler.max_eigenvalue(f)
                dt = min(2.0 * grid.dx**2 / A, t_end - t)
                f = euler.fluid_step(f, None, dt, h, ("periodic", "periodic"), A=A)
                t += dt
            exact = 1.0 + 0.2 * np.sin(2 * np.pi * (x - t_end))
            return np.mean(np.abs(f.rho - exact))

        errs = [run(n) for n in (50, 100, 200)]
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 1.8, (errs, orders)


class TestKineticFlux:
    def test_both_zero(self):
        assert np.all(euler.kinetic_flux(np.zeros(5), np.zeros(5)) == 0.0)

    def test_antisymmetry(self):
        g = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
        assert np.all(euler.kinetic_flux(g, -g) == 0.0)

    def test_average(self):
        a = np.array([1.0, 0, 0, 0, 0])
        b = np.array([3.0, 0, 0, 0, 0])
        assert np.allclose(euler.kinetic_flux(a, b), [2, 0, 0, 0, 0])


class TestFluidStep:
    def test_uniform_steady_state(self):
        f = uniform_field(32, rho=1.2, ux=0.4, theta=2.5)
        out = euler.fluid_step(f, None, 1e-3, np.zeros(32), ("open", "open"))
        assert np.max(np.abs(out.as_matrix() - f.as_matrix())) < 1e-14

    def test_periodic_conservation(self):
        grid = GridSpec(0.0, 1.0, 64)
        x = grid.centers()
        rho = 1.0 + 0.3 * np.sin(2 * np.pi * x)
        u = np.zeros((64, 3))
        u[:, 0] = 0.5 * np.cos(2 * np.pi * x)
        f = ConservedField.from_primitives(grid, rho, u, 1.0)
        rng = np.random.default_rng(0)
        gk = rng.normal(0, 0.01, (64, 5))  # arbitrary correction also telescopes
        tot0 = f.totals()
        for _ in range(50):
            A = euler.max_eigenvalue(f)
            f = euler.fluid_step(f, gk, 0.3 * grid.dx / A, np.zeros(64), ("periodic", "periodic"), A=A)
        assert np.max(np.abs(f.totals() - tot0)) < 1e-12

    def test_sod_versus_exact_riemann(self):
        f = sod_field(200)
        grid = f.grid
        h = np.zeros(200)
        t, t_end = 0.0, 0.8
        while t < t_end - 1e-12:
            A = euler.max_eigenvalue(f)
            dt = min(grid.dx / A, t_end - t)
            f = euler.fluid_step(f, None, dt, h, ("open", "open"), A=A)
            t += dt
        sol = riemann.solve((1.0, 0.0, 5.0), (0.125, 0.0, 0.5))
        rho_ex, _, _ = sol.sample((grid.centers() - 1.0) / t_end)
        l1_per_unit = np.mean(np.abs(f.rho - rho_ex))
        assert l1_per_unit <= 0.02, l1_per_unit

    def test_sod_no_new_density_extrema(self):
        f = sod_field(200)
        grid = f.grid
        h = np.zeros(200)
        t, t_end = 0.0, 0.8
        lo, hi = 0.125, 1.0
        while t < t_end - 1e-12:
            A = euler.max_eigenvalue(f)
            dt = min(grid.dx / A, t_end - t)
            f = euler.fluid_step(f, None, dt, h, ("open", "open"), A=A)
            t += dt
            assert f.rho.min() >= lo - 1e-6 and f.rho.max() <= hi + 1e-6

    def test_transverse_momentum_stays_zero(self):
        f = sod_field(100)
        h = np.zeros(100)
        for _ in range(50):
            A = euler.max_eigenvalue(f)
            f = euler.fluid_step(f, None, 0.5 * f.grid.dx / A, h, ("open", "open"), A=A)
        assert np.max(np.abs(f.mom[:, 1:])) < 1e-10

    def test_reflecting_wall_preserves_rest_gas(self):
        f = uniform_field(16, rho=1.0, ux=0.0, theta=2.0)
        out = euler.fluid_step(f, None, 1e-3, np.zeros(16), ("reflecting", "open"))
        assert np.max(np.abs(out.as_matrix() - f.as_matrix())) < 1e-14

    def test_nonphysical_raises(self):
        grid = GridSpec(0.0, 1.0, 8)
        f = ConservedField.from_primitives(grid, np.full(8, 1e-12), np.zeros((8, 3)), 1e-12)
        fld = f.copy()
        fld.en[:] = -1.0  # force an unphysical update result
        with pytest.raises(NonPhysicalState):
            euler.fluid_step(fld, None, 1.0, np.zeros(8), ("open", "open"), A=1.0)
