"""Momentum balance assembly and scalar pressure extraction.

The time derivative of the mean momentum plus the divergence of the mean
stress must be (minus) a spatial gradient for the optimizer; the pressure is
recovered slice by slice through the Helmholtz projection of that residual,
in the zero-spatial-mean gauge (pressure is only defined up to a function of
time).  The part of the residual that is not a gradient is reported as the
solenoidal defect rather than asserted small: the exact-gradient statement
is a continuum fact and discretization pollutes it at O(h^2 + 1/K^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import Coupling
from .kinematics import PhaseAggregates, current_velocity
from .path_measure import FactoredPathMeasure
from .torus import GridSpec, divergence, gradient, laplacian, poisson_solve


@dataclass(frozen=True)
class PressureField:
    """Zero-mean pressure slices on interior-interior times with diagnostics.

    ``slices[i]`` lives at slice index ``k_indices[i]``; ``defects[i]`` is the
    relative L2 norm of the non-gradient part of the momentum residual there.
    """

    grid: GridSpec
    K: int
    k_indices: tuple
    slices: np.ndarray
    defects: np.ndarray
    gauge: str = "zero spatial mean per slice"

    def at_slice(self, k: int) -> np.ndarray:
        return self.slices[self.k_indices.index(k)]


def _div_rows(grid: GridSpec, stress: np.ndarray) -> np.ndarray:
    """Row-wise divergence of a (… d, d) stress field."""
    out = np.empty(grid.shape + (grid.d,))
    for a in range(grid.d):
        out[..., a] = divergence(grid, stress[..., a, :])
    return out


def _l2(grid: GridSpec, field: np.ndarray) -> float:
    return float(np.sqrt(np.sum(field**2) * grid.cell_measure))


def momentum_residual(agg: PhaseAggregates) -> tuple:
    """Centered-time momentum balance r_k = d_t m_bar + Div S_bar.

    Defined on interior-interior slices k = 2 .. K-2 (the time derivative
    uses both interior neighbours); returns (k_indices, residuals).
    """
    K = agg.K
    if K < 4:
        raise ValueError("need at least 3 interior slices (K >= 4) for the residual")
    grid = agg.grid
    ks = tuple(range(2, K - 1))
    out = np.empty((len(ks),) + grid.shape + (grid.d,))
    for i, k in enumerate(ks):
        dm = (agg.m_bar[k] - agg.m_bar[k - 2]) * K / 2.0
        out[i] = dm + _div_rows(grid, agg.S_bar[k - 1])
    return ks, out


def extract_pressure(grid: GridSpec, k_indices, residuals: np.ndarray, K: int) -> PressureField:
    """Helmholtz extraction: p_k = -poisson(div r_k), slice by slice.

    The defect floor 1e-14 N^{d/2} keeps the trivial (r ~ 0) case well
    defined.
    """
    floor = 1e-14 * grid.N ** (grid.d / 2.0)
    slices = np.empty((len(k_indices),) + grid.shape)
    defects = np.empty(len(k_indices))
    for i, k in enumerate(k_indices):
        r = residuals[i]
        p = -poisson_solve(grid, divergence(grid, r))
        p -= p.mean()
        slices[i] = p
        defects[i] = _l2(grid, r + gradient(grid, p)) / max(_l2(grid, r), floor)
    return PressureField(grid=grid, K=K, k_indices=tuple(k_indices),
                         slices=slices, defects=defects)


def pressure_from_measure(P: FactoredPathMeasure, gamma: Coupling):
    """Full pipeline: aggregates -> momentum residual -> pressure field."""
    from .kinematics import phase_aggregates

    agg = phase_aggregates(P, gamma)
    ks, res = momentum_residual(agg)
    return extract_pressure(P.grid, ks, res, P.K), agg


def pressure_pairing(pressure: PressureField, phi_values: np.ndarray) -> float:
    """<p, phi> = sum_k dt sum_x p_k(x) phi_k(x) h^d over the slices where
    the pressure is defined."""
    grid = pressure.grid
    dt = 1.0 / pressure.K
    total = 0.0
    for i, k in enumerate(pressure.k_indices):
        total += float(np.sum(pressure.slices[i] * phi_values[k]))
    return total * dt * grid.cell_measure


def phase_momentum_diagnostic(P: FactoredPathMeasure, gamma: Coupling,
                              pressure: PressureField, x, y) -> float:
    """Residual norm of the per-phase momentum system in the extracted
    pressure, for the (x, y) conditional-bridge phase.

    d_t(rho c) + Div((c⊗c - w⊗w) rho) + (nu^2/4) componentwise-Lap grad rho
    + rho grad p, with w = (nu/2) grad log rho; reported as a diagnostic
    only (the derivation of this system is formal), as the max over
    interior-interior slices of the L2 norm.
    """
    grid = P.grid
    nu = P.nu
    bridge = P.conditional_bridge(x, y)
    K = P.K
    rho = {k: bridge.marginal(k).values for k in range(1, K)}
    mom = {k: rho[k][..., None] * current_velocity(bridge, k) for k in range(1, K)}
    worst = 0.0
    for k in pressure.k_indices:
        if not (k - 1 in rho and k + 1 in rho):
            continue
        c = mom[k] / rho[k][..., None]
        w = 0.5 * nu * gradient(grid, np.log(rho[k]))
        stress = (c[..., :, None] * c[..., None, :] - w[..., :, None] * w[..., None, :])
        stress *= rho[k][..., None, None]
        dtm = (mom[k + 1] - mom[k - 1]) * K / 2.0
        lap_grad = np.stack(
            [laplacian(grid, gradient(grid, rho[k])[..., a]) for a in range(grid.d)],
            axis=-1,
        )
        resid = (
            dtm
            + _div_rows(grid, stress)
            + 0.25 * nu**2 * lap_grad
            + rho[k][..., None] * gradient(grid, pressure.at_slice(k))
        )
        worst = max(worst, _l2(grid, resid))
    return worst
