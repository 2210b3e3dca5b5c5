"""Named endpoint-coupling generators.

The shear coupling is the canonical nontrivial pressure instance: a
deterministic shift x -> x + v(x) mollified by a small heat kernel (so the
matrix is strictly positive on a band) and then balanced to exact
bistochasticity by iterated proportional fitting.
"""

from __future__ import annotations

import numpy as np

from .entropy import Coupling
from .path_measure import reference_measure
from .torus import GridSpec, heat_kernel, kernel_matrix

SHEAR_AMPLITUDE = 0.25
SHEAR_SMOOTHING = 0.04


def reference_coupling(grid: GridSpec, nu: float, K: int) -> Coupling:
    """Endpoint coupling of the reversible Brownian chain itself."""
    return Coupling(grid, reference_measure(grid, nu, K).endpoint_coupling())


def product_coupling(grid: GridSpec) -> Coupling:
    """Independent uniform endpoints Leb ⊗ Leb."""
    return Coupling.product(grid)


def shear_coupling(grid: GridSpec, amplitude: float = SHEAR_AMPLITUDE,
                   smoothing: float = SHEAR_SMOOTHING,
                   balance_tol: float = 1e-13) -> Coupling:
    """Mollified deterministic shift coupling concentrated near y = x + v(x).

    v(x) = amplitude * sin(2 pi x_1); ``smoothing`` is the variance of the
    mollifying wrapped Gaussian.  The raw band matrix is balanced to uniform
    marginals by IPFP before validation.
    """
    n = grid.n_cells
    coords = grid.cell_coords().reshape(n, grid.d)
    shift = np.zeros((n, grid.d))
    shift[:, 0] = amplitude * np.sin(2.0 * np.pi * coords[:, 0])
    moll = heat_kernel(grid, nu=1.0, s=smoothing)
    band = kernel_matrix(grid, moll.values)
    # row i of the band recentred at x_i + v(x_i): displacement y - x - v(x)
    target = (coords + shift) % 1.0
    vals = np.empty((n, n))
    for i in range(n):
        disp = (coords - target[i] + 0.5) % 1.0 - 0.5
        vals[i] = _kernel_at(moll, disp)
    vals = _ipfp_balance(grid, vals, balance_tol)
    return Coupling(grid, vals)


def _kernel_at(kernel, disp: np.ndarray) -> np.ndarray:
    """Evaluate the wrapped-Gaussian mollifier at off-grid displacements."""
    t = kernel.nu * kernel.s
    m = np.arange(-8, 9)
    out = np.ones(disp.shape[0])
    for a in range(disp.shape[1]):
        pts = disp[:, a][:, None] + m[None, :]
        out *= np.exp(-(pts**2) / (2.0 * t)).sum(axis=1) / np.sqrt(2.0 * np.pi * t)
    return out


def _ipfp_balance(grid: GridSpec, vals: np.ndarray, tol: float, max_rounds: int = 5000):
    hd = grid.cell_measure
    for _ in range(max_rounds):
        vals = vals / (vals.sum(axis=1, keepdims=True) * hd)
        vals = vals / (vals.sum(axis=0, keepdims=True) * hd)
        viol = np.abs(vals.sum(axis=1) * hd - 1.0).max()
        if viol <= tol:
            break
    return vals


def named_coupling(name: str, grid: GridSpec, nu: float, K: int, **kwargs) -> Coupling:
    if name == "reference-coupling":
        return reference_coupling(grid, nu, K)
    if name == "product":
        return product_coupling(grid)
    if name == "shear":
        return shear_coupling(grid, **kwargs)
    raise ValueError(f"unknown coupling generator '{name}'")
