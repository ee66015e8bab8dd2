"""Tests for stochastic rounding and moment matching."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridgas import guide
from hybridgas.core import (
    ConservedField,
    GridSpec,
    ParticleEnsemble,
    RngStream,
    field_moments,
    make_state,
    sample_maxwellian,
)
from hybridgas.errors import DegenerateSample, EmptySource


def cell_mu(v):
    est = guide.MomentEstimate.from_velocities(v)
    return est.mu1, est.mu2


class TestStochasticRound:
    def test_integer_fixed_point(self):
        rng = RngStream(0).generator(0)
        assert all(guide.stochastic_round(3.0, rng) == 3 for _ in range(100))

    def test_zero(self):
        assert guide.stochastic_round(0.0, RngStream(0).generator(0)) == 0

    def test_bernoulli_mean(self):
        rng = RngStream(123).generator(0)
        n = 10**5
        draws = np.array([guide.stochastic_round(2.3, rng) for _ in range(n)])
        sigma = np.sqrt(0.21 / n)
        assert abs(draws.mean() - 2.3) < 3 * sigma
        assert set(np.unique(draws)) <= {2, 3}

    @given(st.floats(0, 1000, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_within_one(self, x):
        r = guide.stochastic_round(x, RngStream(1).generator(0))
        assert abs(r - x) < 1.0 or r == x

    def test_negative_raises(self):
        with pytest.raises(ValueError):
            guide.stochastic_round(-0.1, RngStream(0).generator(0))


class TestMatchVelocityEnergy:
    def test_identity_when_targets_equal(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=(40, 3))
        mu1, mu2 = cell_mu(v)
        out = guide.match_velocity_energy(v, mu1, mu2)
        assert np.allclose(out, v, atol=1e-13)

    def test_hand_transform(self):
        v = np.array([[-1.0, 0, 0], [1.0, 0, 0]])
        out = guide.match_velocity_energy(v, np.zeros(3), 1.0)
        assert np.allclose(out, [[-np.sqrt(2), 0, 0], [np.sqrt(2), 0, 0]], atol=1e-14)
        assert 0.5 * np.mean(np.einsum("ij,ij->i", out, out)) == pytest.approx(1.0, abs=1e-14)

    @given(st.integers(2, 60), st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_defining_property(self, k, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(0, 1.5, size=(k, 3)) + rng.normal(0, 1, 3)
        sigma1 = rng.normal(0, 1, 3)
        # target energy must satisfy 2*sigma2 >= |sigma1|^2
        sigma2 = 0.5 * float(sigma1 @ sigma1) + rng.uniform(0.1, 3.0)
        out = guide.match_velocity_energy(v, sigma1, sigma2)
        m1, m2 = cell_mu(out)
        scale = max(1.0, abs(sigma2))
        assert np.allclose(m1, sigma1, atol=1e-12 * scale)
        assert abs(m2 - sigma2) <= 1e-12 * scale

    def test_single_particle_skipped(self):
        v = np.array([[1.0, 2.0, 3.0]])
        out = guide.match_velocity_energy(v, np.zeros(3), 10.0)
        assert np.array_equal(out, v)

    def test_degenerate_sample_raises(self):
        v = np.tile([1.0, 0.0, 0.0], (5, 1))
        with pytest.raises(DegenerateSample):
            guide.match_velocity_energy(v, np.zeros(3), 1.0)

    def test_degenerate_sample_equal_targets_ok(self):
        v = np.tile([1.0, 0.0, 0.0], (5, 1))
        out = guide.match_velocity_energy(v, np.array([1.0, 0, 0]), 0.5)
        assert np.array_equal(out, v)

    def test_zero_target_variance_collapses(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(10, 3))
        s1 = np.array([0.3, 0, 0])
        out = guide.match_velocity_energy(v, s1, 0.5 * float(s1 @ s1))
        assert np.allclose(out, s1)


class TestMatchDensity:
    def test_no_change_when_equal(self):
        x = np.linspace(0.05, 0.95, 10)
        v = np.zeros((10, 3))
        # w = 1 -> mu0 = 10; sigma0 = 10 -> frac 0, no change
        x2, v2 = guide.match_density(x, v, 10.0, 1.0, 1.0, 1.0, 0.0, RngStream(0).generator(0))
        assert np.array_equal(x2, x)

    def test_exact_integer_deletion(self):
        x = np.linspace(0.05, 0.95, 10)
        v = np.arange(30, dtype=float).reshape(10, 3)
        x2, v2 = guide.match_density(x, v, 7.0, 1.0, 1.0, 1.0, 0.0, RngStream(2).generator(0))
        assert len(x2) == 7
        # survivors are a subset of the originals
        survivors = {tuple(row) for row in v2}
        assert survivors <= {tuple(row) for row in v}

    def test_replication_mean(self):
        adds = []
        for seed in range(2000):
            x = np.zeros(5) + 0.5
            v = np.arange(15, dtype=float).reshape(5, 3)
            x2, _ = guide.match_density(x, v, 7.5, 1.0, 1.0, 1.0, 0.0, RngStream(seed).generator(0))
            adds.append(len(x2) - 5)
        adds = np.array(adds)
        assert set(np.unique(adds)) <= {2, 3}
        sigma = np.sqrt(0.25 / len(adds))
        assert abs(adds.mean() - 2.5) < 3 * sigma

    def test_replicas_keep_velocity_and_relocate(self):
        x = np.full(4, 0.25)
        v = np.tile([1.0, 2.0, 3.0], (4, 1))
        x2, v2 = guide.match_density(x, v, 8.0, 1.0, 1.0, 1.0, 0.0, RngStream(5).generator(0))
        assert len(x2) == 8
        assert np.all(v2 == [1.0, 2.0, 3.0])
        new_x = x2[4:]
        assert np.all((new_x >= 0.0) & (new_x < 1.0))
        assert not np.all(new_x == 0.25)

    def test_residual_below_one_particle_mass(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            k = rng.integers(1, 40)
            w = 0.37
            x = rng.random(k)
            v = rng.normal(size=(k, 3))
            sigma0 = rng.uniform(0.0, 2.0) * k * w
            x2, _ = guide.match_density(x, v, sigma0, 1.0, w, 1.0, 0.0, np.random.default_rng(rng.integers(2**32)))
            mu0_post = w * len(x2)
            if sigma0 >= 0 and len(x2) > 0:
                assert abs(mu0_post - sigma0) < w + 1e-12 or len(x2) == 0

    def test_empty_source_raises(self):
        with pytest.raises(EmptySource):
            guide.match_density(np.empty(0), np.empty((0, 3)), 1.0, 1.0, 1.0, 1.0, 0.0, RngStream(0).generator(0))


class TestMatchCell:
    def test_h_zero_noop(self):
        x = np.array([0.5])
        v = np.array([[9.0, 9.0, 9.0]])
        target = make_state(123.0, (0, 0, 0), 1.0)
        x2, v2 = guide.match_cell(x, v, target, 0.0, 1.0, 1.0, 0.0, RngStream(0).generator(0))
        assert np.array_equal(x2, x) and np.array_equal(v2, v)

    def test_random_cells_defining_property(self):
        rng = np.random.default_rng(77)
        for trial in range(100):
            k = rng.integers(5, 200)
            h = rng.uniform(0.1, 1.0)
            m_p, dx = 0.01, 0.5
            rho_t = rng.uniform(0.5, 2.0)
            u_t = rng.normal(0, 1, 3)
            theta_t = rng.uniform(0.2, 4.0)
            target = make_state(rho_t, u_t, theta_t)
            x = rng.random(k) * dx
            v = rng.normal(0, 1, (k, 3)) + rng.normal(0, 1, 3)
            x2, v2 = guide.match_cell(
                x, v, target, h, m_p, dx, 0.0, np.random.default_rng(trial)
            )
            w = h * m_p / dx
            assert abs(w * len(x2) - h * rho_t) < w + 1e-12
            if len(x2) >= 2:
                m1, m2 = cell_mu(v2)
                e_t = 0.5 * float(u_t @ u_t) + 1.5 * theta_t
                assert np.allclose(m1, u_t, atol=1e-11)
                assert m2 == pytest.approx(e_t, abs=1e-11)

    def test_idempotent_up_to_count_noise(self):
        rng = np.random.default_rng(8)
        k = 100
        target = make_state(1.0, (0.2, 0, 0), 1.0)
        m_p, dx, h = 0.01, 1.0, 1.0
        x = rng.random(k)
        v = rng.normal(0, 1, (k, 3))
        x1, v1 = guide.match_cell(x, v, target, h, m_p, dx, 0.0, np.random.default_rng(1))
        x2, v2 = guide.match_cell(x1, v1, target, h, m_p, dx, 0.0, np.random.default_rng(2))
        assert abs(len(x2) - len(x1)) <= 1
        if len(x1) == len(x2):
            assert np.allclose(v1, v2, atol=1e-10)


class TestMatchAll:
    def make_ensemble(self, seed=0, n_cells=8, per_cell=50):
        grid = GridSpec(0.0, 1.0, n_cells)
        ens = ParticleEnsemble(grid, 1.0 / (n_cells * per_cell))
        rng = RngStream(seed).generator(0)
        x = (np.arange(n_cells * per_cell) % n_cells + rng.random(n_cells * per_cell)) * grid.dx
        v = sample_maxwellian((0, 0, 0), 1.0, n_cells * per_cell, rng)
        ens.append(x, v)
        ens.rebin()
        return grid, ens

    def test_matches_target_everywhere(self):
        grid, ens = self.make_ensemble()
        n = grid.n_cells
        rng2 = np.random.default_rng(3)
        target = ConservedField.from_primitives(
            grid,
            rng2.uniform(0.8, 1.2, n),
            rng2.normal(0, 0.2, (n, 3)),
            rng2.uniform(0.8, 1.2, n),
        )
        h = np.linspace(0.2, 1.0, n)
        guide.match_all(ens, target, h, RngStream(5), step=0)
        got = field_moments(ens, h)
        w = h * ens.m_p / grid.dx
        assert np.all(np.abs(got.rho - h * target.rho) < w + 1e-12)
        _, u_t, _, e_t = target.primitives()
        counts = ens.counts()
        for j in range(n):
            if counts[j] >= 2:
                seg = ens.cell == j
                m1, m2 = cell_mu(ens.v[seg])
                assert np.allclose(m1, u_t[j], atol=1e-11)
                assert m2 == pytest.approx(e_t[j], abs=1e-11)

    def test_h_zero_cells_untouched(self):
        grid, ens = self.make_ensemble(seed=2)
        n = grid.n_cells
        target = ConservedField.from_primitives(grid, 2.0, np.zeros(3), 1.0)
        h = np.zeros(n)
        h[3] = 1.0
        before = ens.copy()
        guide.match_all(ens, target, h, RngStream(6), step=0)
        for j in range(n):
            if j == 3:
                continue
            sel_b = before.cell == j
            sel_a = ens.cell == j
            assert np.array_equal(np.sort(before.ids[sel_b]), np.sort(ens.ids[sel_a] if np.any(sel_a) else before.ids[sel_b]))

    def test_empty_active_cell_raises(self):
        grid = GridSpec(0.0, 1.0, 4)
        ens = ParticleEnsemble(grid, 0.1)
        target = ConservedField.from_primitives(grid, 1.0, np.zeros(3), 1.0)
        with pytest.raises(EmptySource):
            guide.match_all(ens, target, np.ones(4), RngStream(0), step=0)

    def test_deterministic_given_seed(self):
        grid, ens1 = self.make_ensemble(seed=4)
        _, ens2 = self.make_ensemble(seed=4)
        target = ConservedField.from_primitives(grid, 1.1, np.array([0.1, 0, 0]), 0.9)
        h = np.full(grid.n_cells, 0.7)
        guide.match_all(ens1, target, h, RngStream(9), step=3)
        guide.match_all(ens2, target, h, RngStream(9), step=3)
        assert np.array_equal(ens1.x, ens2.x)
        assert np.array_equal(ens1.v, ens2.v)
        assert np.array_equal(ens1.ids, ens2.ids)
