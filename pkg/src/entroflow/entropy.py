"""Densities, couplings and the entropy-type functionals on the grid.

Relative entropy uses the convention 0*log(0/r) = 0 and returns +inf
(``numpy.inf``) as soon as the first measure charges a cell where the
reference vanishes.  Time integrals use trapezoidal weights on the uniform
slice grid t_k = k/K; space integrals are exact cell sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .torus import GridSpec, gradient, divergence

MASS_TOL = 1e-12
BISTOCHASTIC_TOL = 1e-10
BALANCE_LIMIT = 1e-6


@dataclass(frozen=True)
class Density:
    """Nonnegative field with unit discrete mass: sum(values) * h^d = 1."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"density shape {vals.shape} != grid shape {self.grid.shape}")
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise ValueError("density must be finite and nonnegative")
        mass = vals.sum() * self.grid.cell_measure
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass} deviates from 1 beyond {MASS_TOL}")
        object.__setattr__(self, "values", vals / mass)

    @classmethod
    def uniform(cls, grid: GridSpec) -> "Density":
        return cls(grid, np.ones(grid.shape))

    def mass_values(self) -> np.ndarray:
        return self.values * self.grid.cell_measure


@dataclass(frozen=True)
class Coupling:
    """Bistochastic density matrix gamma(x, y) on grid x grid.

    Both marginals must equal Lebesgue (the constant density 1).  A marginal
    violation up to 1e-6 is repaired by one round of Sinkhorn balancing
    against uniform marginals; anything larger is rejected, since downstream
    constraint sets have to be consistent to solver tolerance.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = self.grid.n_cells
        if vals.shape != (n, n):
            raise ValueError(f"coupling shape {vals.shape} != ({n}, {n})")
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise ValueError("coupling must be finite and nonnegative")
        hd = self.grid.cell_measure
        viol = self._violation(vals, hd)
        if viol > BALANCE_LIMIT:
            raise ValueError(
                f"coupling marginals deviate from Lebesgue by {viol:.3e} > {BALANCE_LIMIT}"
            )
        if viol > BISTOCHASTIC_TOL:
            row = vals.sum(axis=1) * hd
            vals = vals / row[:, None]
            col = vals.sum(axis=0) * hd
            vals = vals / col[None, :]
            viol = self._violation(vals, hd)
            if viol > BISTOCHASTIC_TOL:
                raise ValueError(
                    f"coupling still imbalanced ({viol:.3e}) after one balancing round"
                )
        object.__setattr__(self, "values", vals)

    @staticmethod
    def _violation(vals: np.ndarray, hd: float) -> float:
        row = vals.sum(axis=1) * hd
        col = vals.sum(axis=0) * hd
        return max(np.abs(row - 1.0).max(), np.abs(col - 1.0).max())

    @classmethod
    def product(cls, grid: GridSpec) -> "Coupling":
        n = grid.n_cells
        return cls(grid, np.ones((n, n)))

    def mass_values(self) -> np.ndarray:
        return self.values * self.grid.cell_measure**2

    def marginals(self) -> tuple:
        hd = self.grid.cell_measure
        return self.values.sum(axis=1) * hd, self.values.sum(axis=0) * hd


@dataclass(frozen=True)
class TrajectoryFields:
    """K+1 density slices rho_k and velocity slices c_k on a common grid."""

    grid: GridSpec
    rho: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if rho.ndim != 1 + self.grid.d or rho.shape[1:] != self.grid.shape:
            raise ValueError("rho slices must have shape (K+1, *grid.shape)")
        if c.shape != rho.shape + (self.grid.d,):
            raise ValueError("c slices must have shape (K+1, *grid.shape, d)")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(c))):
            raise ValueError("trajectory fields must be finite")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "c", c)

    @property
    def K(self) -> int:
        return self.rho.shape[0] - 1


def time_weights(K: int) -> np.ndarray:
    """Trapezoidal weights on t_k = k/K: dt at interior slices, dt/2 at the ends."""
    w = np.full(K + 1, 1.0 / K)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _kl_masses(p: np.ndarray, r: np.ndarray) -> float:
    """KL divergence of two mass arrays of the same shape."""
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {r.shape}")
    charged = p > 0.0
    if np.any(r[charged] == 0.0):
        return np.inf
    pm = p[charged]
    return float(np.sum(pm * np.log(pm / r[charged])))


def relative_entropy(p, r) -> float:
    """H(p | r) for two Density or two Coupling objects (or raw mass arrays)."""
    if isinstance(p, (Density, Coupling)) and isinstance(r, (Density, Coupling)):
        if type(p) is not type(r) or p.grid != r.grid:
            raise ValueError("relative entropy needs two measures of the same kind and grid")
        return _kl_masses(p.mass_values(), r.mass_values())
    return _kl_masses(p, r)


def kinetic_action(t: TrajectoryFields) -> float:
    """(1/2) sum_k w_k sum_x |c_k|^2 rho_k h^d."""
    w = time_weights(t.K)
    speed2 = np.sum(t.c**2, axis=-1)
    per_slice = (speed2 * t.rho).sum(axis=tuple(range(1, 1 + t.grid.d)))
    return 0.5 * float(np.dot(w, per_slice)) * t.grid.cell_measure


def fisher_information(grid: GridSpec, rho_slices: np.ndarray) -> float:
    """(1/2) sum_k w_k sum_x |(1/2) grad log rho_k|^2 rho_k h^d.

    Requires strictly positive slices; any nonpositive cell is a hard error.
    """
    rho = np.asarray(rho_slices, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("fisher information needs strictly positive densities")
    K = rho.shape[0] - 1
    w = time_weights(K)
    total = 0.0
    for k in range(K + 1):
        g = 0.5 * gradient(grid, np.log(rho[k]))
        total += w[k] * float(np.sum(np.sum(g**2, axis=-1) * rho[k]))
    return 0.5 * total * grid.cell_measure


def h_nu(t: TrajectoryFields, nu: float) -> float:
    """Kinetic action plus nu^2 times the Fisher information."""
    return kinetic_action(t) + nu**2 * fisher_information(t.grid, t.rho)


def multiphase_h_nu(phases, nu: float) -> float:
    """Weighted sum of h_nu over a finite phase family.

    ``phases`` is a sequence of (weight, TrajectoryFields) pairs whose
    weights form a probability vector.
    """
    weights = np.array([w for w, _ in phases], dtype=float)
    if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights < 0.0):
        raise ValueError("phase weights must be a probability vector (to 1e-12)")
    return float(sum(w * h_nu(t, nu) for w, t in phases))


def continuity_residual(t: TrajectoryFields) -> float:
    """Max over interior slices of the centered discrete continuity defect.

    Measures sup_x |(rho_{k+1} - rho_{k-1}) K/2 + div(rho_k c_k)|.
    """
    K = t.K
    worst = 0.0
    for k in range(1, K):
        dt_rho = (t.rho[k + 1] - t.rho[k - 1]) * K / 2.0
        flux = divergence(t.grid, t.rho[k][..., None] * t.c[k])
        worst = max(worst, float(np.abs(dt_rho + flux).max()))
    return worst
