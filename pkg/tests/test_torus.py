"""Grid, heat kernel and periodic-calculus unit tests."""

import numpy as np
import pytest

from entroflow.torus import (
    displacement_axis,
    divergence,
    gradient,
    heat_kernel,
    laplacian,
    make_grid,
    poisson_solve,
    semigroup_compose,
)

# Wrapped-Gaussian series at z=0, t=nu*s=0.025, N=32, renormalized to exact
# discrete mass; computed with mpmath at 50 digits (image sum |m| <= 60, tail
# < 1e-30; the discrete normalizer is 1 to ~1e-200 by Poisson summation).
Q0_N32_T0025 = 2.5231325324212875


def test_make_grid_basic():
    g = make_grid(1, 32)
    assert g.h == 1.0 / 32
    g2 = make_grid(2, 16)
    assert g2.n_cells == 256
    assert g2.cell_measure == pytest.approx(1.0 / 256)


@pytest.mark.parametrize("d,N", [(1, 3), (1, 2), (1, 5), (2, 7), (3, 8), (0, 8)])
def test_make_grid_rejects(d, N):
    with pytest.raises(ValueError):
        make_grid(d, N)


def test_heat_kernel_series_value():
    g = make_grid(1, 32)
    k = heat_kernel(g, nu=0.2, s=0.125)
    assert k.values[0] == pytest.approx(Q0_N32_T0025, abs=1e-13)


@pytest.mark.parametrize("d,N,nu,s", [(1, 32, 0.2, 0.125), (1, 16, 0.05, 0.5), (2, 8, 0.3, 0.2)])
def test_heat_kernel_mass_positivity_symmetry(d, N, nu, s):
    g = make_grid(d, N)
    k = heat_kernel(g, nu, s)
    assert k.values.sum() * g.cell_measure == pytest.approx(1.0, abs=1e-14)
    assert np.all(k.values > 0)
    rev = k.values
    for axis in range(d):
        rev = np.take(rev, (-np.arange(N)) % N, axis=axis)
    assert np.array_equal(k.values, rev)
    rows = k.transition_matrix().sum(axis=1)
    assert np.abs(rows - 1.0).max() < 1e-13


def test_heat_kernel_equilibrates():
    g = make_grid(1, 32)
    k = heat_kernel(g, nu=0.7, s=100.0)
    assert np.abs(k.values - 1.0).max() < 1e-12


def test_heat_kernel_monotone_approach_to_uniform():
    g = make_grid(1, 32)
    prev = np.inf
    for s in [0.01 * 2**j for j in range(10)]:
        dist = np.abs(heat_kernel(g, 0.2, s).values - 1.0).max()
        assert dist <= prev + 1e-15
        prev = dist


def test_semigroup_compose_matches_direct():
    g = make_grid(1, 32)
    k1 = heat_kernel(g, 0.2, 0.25)
    comp = semigroup_compose(k1, k1)
    direct = heat_kernel(g, 0.2, 0.5)
    assert comp.s == pytest.approx(0.5)
    # aliasing error of the sampled wrapped Gaussian at these scales is far
    # below this tolerance
    assert np.abs(comp.values - direct.values).max() < 1e-12
    assert comp.values.sum() * g.h == pytest.approx(1.0, abs=1e-14)


def test_semigroup_compose_fixed_point_at_equilibrium():
    g = make_grid(1, 16)
    flat = heat_kernel(g, 0.5, 50.0)
    step = heat_kernel(g, 0.5, 0.1)
    comp = semigroup_compose(flat, step)
    assert np.abs(comp.values - 1.0).max() < 1e-12


def test_semigroup_compose_rejects_mismatch():
    g = make_grid(1, 16)
    g2 = make_grid(1, 32)
    with pytest.raises(ValueError):
        semigroup_compose(heat_kernel(g, 0.2, 0.1), heat_kernel(g2, 0.2, 0.1))
    with pytest.raises(ValueError):
        semigroup_compose(heat_kernel(g, 0.2, 0.1), heat_kernel(g, 0.3, 0.1))


def test_gradient_constant_and_eigenrelation():
    g = make_grid(1, 32)
    assert np.abs(gradient(g, np.ones(32))).max() == 0.0
    x = g.axis_coords
    f = np.sin(2 * np.pi * x)
    expected = np.sin(2 * np.pi * g.h) / g.h * np.cos(2 * np.pi * x)
    assert np.abs(gradient(g, f)[:, 0] - expected).max() < 1e-13


@pytest.mark.parametrize("d,N", [(1, 32), (2, 12)])
def test_adjointness_summation_by_parts(d, N):
    g = make_grid(d, N)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = rng.normal(size=g.shape)
        v = rng.normal(size=g.shape + (d,))
        lhs = np.sum(f * divergence(g, v))
        rhs = -np.sum(np.sum(gradient(g, f) * v, axis=-1))
        assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(lhs)))


def test_poisson_zero_rhs():
    g = make_grid(1, 32)
    assert np.abs(poisson_solve(g, np.zeros(32))).max() == 0.0


def test_poisson_cosine_eigenvalue():
    g = make_grid(1, 32)
    x = g.axis_coords
    rhs = np.cos(2 * np.pi * x)
    u = poisson_solve(g, rhs)
    expected = -np.cos(2 * np.pi * x) * (g.h / np.sin(2 * np.pi * g.h)) ** 2
    assert np.abs(u - expected).max() < 1e-13


@pytest.mark.parametrize("d,N", [(1, 32), (1, 64), (2, 16)])
def test_poisson_roundtrip_on_bandlimited_fields(d, N):
    # the centered stencil is blind to the Nyquist checkerboard, so random
    # test fields live in the resolvable band (no mean, no Nyquist modes)
    g = make_grid(d, N)
    rng = np.random.default_rng(11)
    spec = np.fft.fftn(rng.normal(size=g.shape))
    freq = np.fft.fftfreq(N) * N
    for axis in range(d):
        sl = [slice(None)] * d
        sl[axis] = np.abs(freq) == N // 2
        spec[tuple(sl)] = 0.0
    spec[(0,) * d] = 0.0
    r = np.fft.ifftn(spec).real
    u = poisson_solve(g, r)
    assert abs(u.mean()) < 1e-13
    assert np.abs(laplacian(g, u) - (r - r.mean())).max() < 1e-11
    u2, info = poisson_solve(g, r + 3.7, full_output=True)
    assert info["subtracted_mean"] == pytest.approx(3.7, abs=1e-12)
    assert np.abs(u2 - u).max() < 1e-12


def test_poisson_inverse_of_laplacian_on_zero_mean():
    g = make_grid(1, 32)
    rng = np.random.default_rng(3)
    u = rng.normal(size=32)
    u -= u.mean()
    # remove the Nyquist component, which the 2h-stencil annihilates
    spec = np.fft.fft(u)
    spec[16] = 0.0
    u = np.fft.ifft(spec).real
    back = poisson_solve(g, laplacian(g, u))
    assert np.abs(back - u).max() < 1e-11


def test_displacement_axis_symmetric_ties():
    g = make_grid(1, 8)
    z = displacement_axis(g)
    assert z[4] == 0.0
    assert np.abs(z + z[(-np.arange(8)) % 8]).max() == 0.0
