"""Discrete flat torus: uniform grids, heat kernels, periodic calculus.

The torus has unit side and unit total measure, so a grid with N points per
axis has spacing h = 1/N and cell measure h^d.  All differential operators
are centered periodic differences, the discrete Laplacian is divergence of
gradient (so summation by parts is exact by construction), and the Poisson
problem is solved in Fourier space with the exact symbol of that stencil.

Scalar fields are plain arrays of shape ``grid.shape``; vector fields carry
their components in a trailing axis of length ``grid.d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the d-torus with N points per axis."""

    d: int
    N: int

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def n_cells(self) -> int:
        return self.N**self.d

    @property
    def cell_measure(self) -> float:
        return self.h**self.d

    @property
    def axis_coords(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    def cell_coords(self) -> np.ndarray:
        """Coordinates of all cells, shape (*grid.shape, d)."""
        axes = np.meshgrid(*([self.axis_coords] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)


def make_grid(d: int, N: int) -> GridSpec:
    """Validated grid constructor.

    N must be even and at least 4: centered differences and the Fourier
    symbol pairing both assume an even number of points per axis.
    """
    if d not in (1, 2):
        raise ValueError(f"spatial dimension must be 1 or 2, got {d}")
    if N < 4 or N % 2 != 0:
        raise ValueError(f"grid size must be even and >= 4, got N={N}")
    return GridSpec(d=d, N=N)


def wrap_coords(x):
    """Reduce torus coordinates to the representative in [-1/2, 1/2)."""
    return (np.asarray(x) + 0.5) % 1.0 - 0.5


def displacement_axis(grid: GridSpec, symmetric_ties: bool = True) -> np.ndarray:
    """Signed displacements j*h wrapped to [-1/2, 1/2) along one axis.

    With ``symmetric_ties`` the antipodal displacement (exactly half a
    period, whose two lifts +1/2 and -1/2 are equidistant) contributes 0
    instead of -1/2.  Drift and momentum sums need this so that symmetric
    kernels have exactly vanishing mean increment.
    """
    z = wrap_coords(np.arange(grid.N) * grid.h)
    if symmetric_ties:
        z[grid.N // 2] = 0.0
    return z


@dataclass(frozen=True)
class HeatKernel:
    """Transition density q_s(z) of the heat flow on the torus grid.

    ``values[z]`` is the density at grid displacement z; it is strictly
    positive, even in z, and has exact discrete mass 1: sum(values)*h^d = 1.
    """

    grid: GridSpec
    nu: float
    s: float
    values: np.ndarray

    def transition_matrix(self) -> np.ndarray:
        """Row-stochastic (n, n) matrix of transition masses q(x_j - x_i) h^d."""
        return kernel_matrix(self.grid, self.values) * self.grid.cell_measure


def _wrapped_gaussian_axis(N: int, t: float) -> np.ndarray:
    """Wrapped Gaussian of variance t sampled at displacements j/N, renormalized.

    The image sum over Z is truncated once the Gaussian tail is below 1e-16
    of the peak; values are symmetrized exactly and rescaled to unit discrete
    mass.
    """
    z = wrap_coords(np.arange(N) / N)
    m_max = max(3, int(math.ceil(10.0 * math.sqrt(t))) + 1)
    m = np.arange(-m_max, m_max + 1)
    pts = z[:, None] + m[None, :]
    vals = np.exp(-(pts**2) / (2.0 * t)).sum(axis=1) / math.sqrt(2.0 * math.pi * t)
    vals = 0.5 * (vals + vals[(-np.arange(N)) % N])
    vals *= N / vals.sum()
    return vals


def heat_kernel(grid: GridSpec, nu: float, s: float) -> HeatKernel:
    """Heat kernel of diffusivity nu at elapsed time s (variance nu*s per axis)."""
    if nu <= 0.0:
        raise ValueError(f"diffusivity must be positive, got nu={nu}")
    if s <= 0.0:
        raise ValueError(f"elapsed time must be positive, got s={s}")
    q1 = _wrapped_gaussian_axis(grid.N, nu * s)
    if grid.d == 1:
        values = q1
    else:
        values = np.multiply.outer(q1, q1)
        values *= grid.n_cells / values.sum()
    if not np.all(values > 0.0):
        raise FloatingPointError("heat kernel lost strict positivity")
    return HeatKernel(grid=grid, nu=nu, s=s, values=values)


def semigroup_compose(k1: HeatKernel, k2: HeatKernel) -> HeatKernel:
    """Discrete convolution of two kernels; approximates the kernel at s1+s2."""
    if k1.grid != k2.grid:
        raise ValueError("kernels live on different grids")
    if k1.nu != k2.nu:
        raise ValueError(f"diffusivity mismatch: {k1.nu} vs {k2.nu}")
    grid = k1.grid
    conv = np.fft.ifftn(np.fft.fftn(k1.values) * np.fft.fftn(k2.values)).real
    conv *= grid.cell_measure
    conv = 0.5 * (conv + _reverse_displacements(conv))
    np.clip(conv, 1e-300, None, out=conv)
    conv *= grid.n_cells / conv.sum()
    return HeatKernel(grid=grid, nu=k1.nu, s=k1.s + k2.s, values=conv)


def compose_steps(kernel: HeatKernel, steps: int) -> HeatKernel:
    """steps-fold semigroup composition of a kernel with itself."""
    if steps < 1:
        raise ValueError("need at least one step")
    out = kernel
    for _ in range(steps - 1):
        out = semigroup_compose(out, kernel)
    return out


def _reverse_displacements(values: np.ndarray) -> np.ndarray:
    """values(-z) on the displacement grid."""
    out = values
    for axis in range(values.ndim):
        idx = (-np.arange(values.shape[axis])) % values.shape[axis]
        out = np.take(out, idx, axis=axis)
    return out


def kernel_matrix(grid: GridSpec, disp_values: np.ndarray) -> np.ndarray:
    """Lift a function of displacements to an (n, n) matrix M[i, j] = f(x_j - x_i)."""
    flat = disp_values.reshape(-1)
    idx = np.arange(grid.N)
    diff1 = (idx[None, :] - idx[:, None]) % grid.N
    if grid.d == 1:
        return flat[diff1]
    flat_idx = (
        diff1[:, None, :, None] * grid.N + diff1[None, :, None, :]
    ).reshape(grid.n_cells, grid.n_cells)
    return flat[flat_idx]


def displacement_table(grid: GridSpec) -> np.ndarray:
    """Wrapped displacements between all cell pairs, shape (n, n, d).

    Entry [i, j] is wrap(x_j - x_i) with the symmetric antipode convention
    of :func:`displacement_axis`.
    """
    z = displacement_axis(grid)
    idx = np.arange(grid.N)
    diff1 = z[(idx[None, :] - idx[:, None]) % grid.N]
    if grid.d == 1:
        return diff1[:, :, None]
    d0 = np.broadcast_to(
        diff1[:, None, :, None], (grid.N, grid.N, grid.N, grid.N)
    ).reshape(grid.n_cells, grid.n_cells)
    d1 = np.broadcast_to(
        diff1[None, :, None, :], (grid.N, grid.N, grid.N, grid.N)
    ).reshape(grid.n_cells, grid.n_cells)
    return np.stack([d0, d1], axis=-1)


def gradient(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Centered periodic gradient, shape (*grid.shape, d)."""
    f = np.asarray(f)
    comps = [
        (np.roll(f, -1, axis=a) - np.roll(f, 1, axis=a)) / (2.0 * grid.h)
        for a in range(grid.d)
    ]
    return np.stack(comps, axis=-1)


def divergence(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient`; same centered stencil per axis."""
    v = np.asarray(v)
    out = np.zeros(grid.shape)
    for a in range(grid.d):
        out += (np.roll(v[..., a], -1, axis=a) - np.roll(v[..., a], 1, axis=a)) / (
            2.0 * grid.h
        )
    return out


def laplacian(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Discrete Laplacian divergence(gradient(f)) (2h-stencil)."""
    return divergence(grid, gradient(grid, f))


def _stencil_symbol(grid: GridSpec):
    """Fourier symbol of divergence∘gradient and its exact null-mode mask.

    The symbol -sum_a sin(2 pi m_a / N)^2 / h^2 vanishes when every axis mode
    is 0 or N/2 (mean and checkerboard modes); the mask is built from the
    integer mode indices because sin(pi) is not exactly zero in floats.
    """
    modes = np.fft.fftfreq(grid.N, d=1.0 / grid.N).astype(int)
    s1 = np.sin(2.0 * np.pi * modes / grid.N) / grid.h
    null1 = (modes == 0) | (np.abs(modes) == grid.N // 2)
    s1[null1] = 0.0
    if grid.d == 1:
        return -(s1**2), null1
    sym = -(s1[:, None] ** 2 + s1[None, :] ** 2)
    null = null1[:, None] & null1[None, :]
    return sym, null


def poisson_solve(grid: GridSpec, rhs: np.ndarray, full_output: bool = False):
    """Zero-mean solution u of divergence(gradient(u)) = rhs, spectrally.

    The mean of rhs is subtracted first, and the Nyquist modes (where the
    centered stencil's symbol vanishes) are projected out as well; both are
    recorded in the info dict when ``full_output`` is set.
    """
    rhs = np.asarray(rhs, dtype=float)
    mean = float(rhs.mean())
    spec = np.fft.fftn(rhs - mean)
    sym, null = _stencil_symbol(grid)
    null_mass = float(np.abs(spec[null]).sum()) / grid.n_cells
    spec = np.where(null, 0.0, spec)
    with np.errstate(divide="ignore", invalid="ignore"):
        u_spec = np.where(null, 0.0, spec / sym)
    u = np.fft.ifftn(u_spec).real
    u -= u.mean()
    if full_output:
        return u, {"subtracted_mean": mean, "null_mode_mass": null_mass}
    return u
