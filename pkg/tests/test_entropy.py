"""Densities, couplings, and the action/Fisher/entropy functionals."""

import math

import numpy as np
import pytest

from entroflow.entropy import (
    Coupling,
    Density,
    TrajectoryFields,
    continuity_residual,
    fisher_information,
    h_nu,
    kinetic_action,
    multiphase_h_nu,
    relative_entropy,
)
from entroflow.torus import heat_kernel, make_grid

# (1/8) * integral of |grad log rho|^2 rho for the wrapped Gaussian of
# variance 0.01 on the unit torus; mpmath quadrature of the image series at
# 50 digits (tail < 1e-30)
FISHER_WRAPPED_GAUSSIAN_SIGMA01 = 12.499441987473192


def wrapped_gaussian_density(grid, sigma2):
    x = (grid.axis_coords + 0.5) % 1.0 - 0.5
    m = np.arange(-40, 41)
    vals = np.exp(-((x[:, None] + m[None, :]) ** 2) / (2 * sigma2)).sum(axis=1)
    vals /= math.sqrt(2 * math.pi * sigma2)
    vals /= vals.sum() * grid.h
    return vals


class TestDensityCoupling:
    def test_density_validation(self):
        g = make_grid(1, 8)
        with pytest.raises(ValueError):
            Density(g, -np.ones(8))
        with pytest.raises(ValueError):
            Density(g, 2.0 * np.ones(8))
        d = Density.uniform(g)
        assert d.mass_values().sum() == pytest.approx(1.0)

    def test_coupling_balancing_small_violation(self):
        g = make_grid(1, 8)
        rng = np.random.default_rng(0)
        base = np.ones((8, 8)) * (1.0 + 1e-8 * rng.normal(size=(8, 8)))
        c = Coupling(g, base * g.N**0)
        row, col = c.marginals()
        assert np.abs(row - 1.0).max() < 1e-10
        assert np.abs(col - 1.0).max() < 1e-10

    def test_coupling_rejects_large_violation(self):
        g = make_grid(1, 8)
        bad = np.ones((8, 8))
        bad[0, :] *= 1.5
        with pytest.raises(ValueError):
            Coupling(g, bad)


class TestRelativeEntropy:
    def test_self_entropy_zero(self):
        g = make_grid(1, 16)
        r = Density(g, wrapped_gaussian_density(g, 0.02))
        assert relative_entropy(r, r) == 0.0

    def test_infinite_off_support(self):
        assert relative_entropy(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == np.inf

    def test_two_cell_toy_value(self):
        # direct evaluation: 0.75 log 1.5 + 0.25 log 0.5
        expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
        got = relative_entropy(np.array([0.75, 0.25]), np.array([0.5, 0.5]))
        assert got == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.130812, abs=1e-6)

    def test_nonnegativity_random(self):
        g = make_grid(1, 16)
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = rng.random(16) + 0.01
            q = rng.random(16) + 0.01
            p = Density(g, p / (p.sum() * g.h))
            q = Density(g, q / (q.sum() * g.h))
            assert relative_entropy(p, q) >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_entropy(np.ones(3) / 3, np.ones(4) / 4)


class TestActionFunctionals:
    def test_zero_velocity(self):
        g = make_grid(1, 16)
        t = TrajectoryFields(g, np.ones((5, 16)), np.zeros((5, 16, 1)))
        assert kinetic_action(t) == 0.0

    def test_uniform_transport(self):
        g = make_grid(1, 16)
        c = np.full((5, 16, 1), 0.7)
        t = TrajectoryFields(g, np.ones((5, 16)), c)
        assert kinetic_action(t) == pytest.approx(0.7**2 / 2, abs=1e-14)

    def test_sine_velocity_quarter(self):
        g = make_grid(1, 32)
        K = 8
        x = g.axis_coords
        c = np.tile(np.sin(2 * np.pi * x)[None, :, None], (K + 1, 1, 1))
        t = TrajectoryFields(g, np.ones((K + 1, 32)), c)
        # exact discrete sine orthogonality makes the cell sum exact
        assert kinetic_action(t) == pytest.approx(0.25, abs=1e-3)

    def test_fisher_uniform_zero(self):
        g = make_grid(1, 16)
        assert fisher_information(g, np.ones((4, 16))) == 0.0

    def test_fisher_wrapped_gaussian_matches_series_oracle(self):
        g = make_grid(1, 64)
        rho = wrapped_gaussian_density(g, 0.01)
        slices = np.tile(rho[None, :], (3, 1))
        got = fisher_information(g, slices)
        assert got == pytest.approx(FISHER_WRAPPED_GAUSSIAN_SIGMA01, abs=1e-3)

    def test_fisher_rejects_nonpositive(self):
        g = make_grid(1, 16)
        rho = np.ones((3, 16))
        rho[1, 4] = 0.0
        with pytest.raises(ValueError):
            fisher_information(g, rho)

    def test_h_nu_composition(self):
        g = make_grid(1, 32)
        rng = np.random.default_rng(2)
        rho = 1.0 + 0.3 * np.sin(2 * np.pi * g.axis_coords)
        rho_slices = np.tile(rho[None, :], (5, 1))
        c = rng.normal(size=(5, 32, 1))
        t = TrajectoryFields(g, rho_slices, c)
        nu = 0.4
        assert h_nu(t, nu) == pytest.approx(
            kinetic_action(t) + nu**2 * fisher_information(g, rho_slices), abs=1e-14
        )
        assert h_nu(t, nu) >= max(kinetic_action(t), nu**2 * fisher_information(g, rho_slices))
        # nu = 0 degenerates to the kinetic action alone
        assert h_nu(t, 0.0) == pytest.approx(kinetic_action(t), abs=1e-15)

    def test_h_nu_zero_on_static_uniform(self):
        g = make_grid(1, 16)
        t = TrajectoryFields(g, np.ones((4, 16)), np.zeros((4, 16, 1)))
        assert h_nu(t, 0.3) == 0.0

    def test_translation_invariance(self):
        g = make_grid(1, 32)
        rng = np.random.default_rng(9)
        rho = 1.0 + 0.4 * np.sin(2 * np.pi * g.axis_coords + 0.3)
        rho_slices = np.tile(rho[None, :], (4, 1))
        c = rng.normal(size=(4, 32, 1))
        t = TrajectoryFields(g, rho_slices, c)
        shift = 7
        t2 = TrajectoryFields(g, np.roll(rho_slices, shift, axis=1), np.roll(c, shift, axis=1))
        assert kinetic_action(t2) == pytest.approx(kinetic_action(t), rel=1e-13)
        assert fisher_information(g, t2.rho) == pytest.approx(
            fisher_information(g, t.rho), rel=1e-13
        )


class TestMultiphase:
    def _phase(self, g, K, rho, c_amp, seed):
        rng = np.random.default_rng(seed)
        c = c_amp * rng.normal(size=(K + 1,) + g.shape + (1,))
        return TrajectoryFields(g, np.tile(rho[None, :], (K + 1, 1)), c)

    def test_single_phase(self):
        g = make_grid(1, 16)
        t = self._phase(g, 3, np.ones(16), 0.5, 0)
        assert multiphase_h_nu([(1.0, t)], 0.2) == pytest.approx(h_nu(t, 0.2))

    def test_two_identical_phases(self):
        g = make_grid(1, 16)
        t = self._phase(g, 3, np.ones(16), 0.5, 1)
        val = multiphase_h_nu([(0.5, t), (0.5, t)], 0.2)
        assert val == pytest.approx(h_nu(t, 0.2), rel=1e-14)

    def test_half_period_translated_phases(self):
        g = make_grid(1, 32)
        K = 4
        rho1 = 1.0 + 0.5 * np.sin(2 * np.pi * g.axis_coords)
        rho2 = np.roll(rho1, 16)
        assert np.abs(0.5 * (rho1 + rho2) - 1.0).max() < 1e-14
        c = 0.3 * np.cos(2 * np.pi * g.axis_coords)[None, :, None] * np.ones((K + 1, 1, 1))
        t1 = TrajectoryFields(g, np.tile(rho1[None, :], (K + 1, 1)), c)
        t2 = TrajectoryFields(g, np.tile(rho2[None, :], (K + 1, 1)), np.roll(c, 16, axis=1))
        val = multiphase_h_nu([(0.5, t1), (0.5, t2)], 0.25)
        direct = 0.5 * h_nu(t1, 0.25) + 0.5 * h_nu(t2, 0.25)
        assert val == pytest.approx(direct, rel=1e-14)
        assert val == pytest.approx(h_nu(t1, 0.25), rel=1e-13)

    def test_weight_normalization_enforced(self):
        g = make_grid(1, 16)
        t = self._phase(g, 3, np.ones(16), 0.5, 2)
        with pytest.raises(ValueError):
            multiphase_h_nu([(0.7, t), (0.7, t)], 0.2)


class TestConvexity:
    def test_h_nu_jointly_convex_in_density_momentum(self):
        g = make_grid(1, 32)
        rng = np.random.default_rng(12)
        nu = 0.3
        K = 4
        for trial in range(5):
            rho1 = 1.0 + 0.5 * rng.uniform(-1, 1, size=(K + 1, 32))
            rho2 = 1.0 + 0.5 * rng.uniform(-1, 1, size=(K + 1, 32))
            rho1 /= rho1.sum(axis=1, keepdims=True) * g.h
            rho2 /= rho2.sum(axis=1, keepdims=True) * g.h
            c1 = rng.normal(size=(K + 1, 32, 1))
            c2 = rng.normal(size=(K + 1, 32, 1))
            t1 = TrajectoryFields(g, rho1, c1)
            t2 = TrajectoryFields(g, rho2, c2)
            for lam in (0.25, 0.5, 0.75):
                rho = (1 - lam) * rho1 + lam * rho2
                mom = (1 - lam) * rho1[..., None] * c1 + lam * rho2[..., None] * c2
                t = TrajectoryFields(g, rho, mom / rho[..., None])
                combo = (1 - lam) * h_nu(t1, nu) + lam * h_nu(t2, nu)
                assert h_nu(t, nu) <= combo + 1e-10


def test_continuity_residual_of_consistent_fields():
    # rho(t,x) = 1 + a(t) sin(2 pi x) with the matching transport velocity
    g = make_grid(1, 64)
    K = 32
    tgrid = np.arange(K + 1) / K
    x = g.axis_coords
    a = 0.2 * np.sin(np.pi * tgrid)
    da = 0.2 * np.pi * np.cos(np.pi * tgrid)
    rho = 1.0 + a[:, None] * np.sin(2 * np.pi * x)[None, :]
    # c = (da/dt) cos(2 pi x) / (2 pi rho) solves the continuity equation
    c = (da[:, None] * np.cos(2 * np.pi * x)[None, :] / (2 * np.pi * rho))[..., None]
    t = TrajectoryFields(g, rho, c)
    assert continuity_residual(t) < 3e-3
