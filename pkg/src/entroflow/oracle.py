"""Independent brute-force solver on tiny instances.

Ground truth for the message-passing solver: the full joint law over all
N^{d(K+1)} paths is materialized and the constrained entropy minimizer is
found twice, by two unrelated methods, so that a bug in one cannot silently
validate a bug in the other:

* primal-dual mirror descent on the simplex (entropic primal steps,
  Euclidean multiplier steps), run until the KKT residual is tiny,
* direct ascent of the smooth concave dual in the Lagrangian potentials
  (quasi-Newton via scipy).

Everything here is single-threaded and deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp as sp_logsumexp

from .entropy import Coupling, Density
from .path_measure import FactoredPathMeasure
from .torus import GridSpec, heat_kernel

MAX_TABLE = 10**6


class FullJointLaw:
    """Explicit probability table over all paths, shape (n,) * (K + 1)."""

    def __init__(self, grid: GridSpec, K: int, table: np.ndarray):
        self.grid = grid
        self.K = K
        self.table = table

    @classmethod
    def reference(cls, grid: GridSpec, nu: float, K: int) -> "FullJointLaw":
        n = grid.n_cells
        _check_budget(n, K)
        lq = np.log(heat_kernel(grid, nu, 1.0 / K).transition_matrix())
        log_t = np.full((n,) * (K + 1), np.log(grid.cell_measure))
        for k in range(K):
            shape = [1] * (K + 1)
            shape[k] = n
            shape[k + 1] = n
            log_t = log_t + lq.reshape(shape)
        return cls(grid, K, np.exp(log_t))

    @classmethod
    def from_measure(cls, P: FactoredPathMeasure) -> "FullJointLaw":
        n = P.grid.n_cells
        K = P.K
        _check_budget(n, K)
        lq = P._lq
        log_t = np.full((n,) * (K + 1), np.log(P.grid.cell_measure))
        for k in range(K):
            shape = [1] * (K + 1)
            shape[k] = n
            shape[k + 1] = n
            log_t = log_t + lq.reshape(shape)
        eta_shape = [1] * (K + 1)
        eta_shape[0] = n
        eta_shape[K] = n
        log_t = log_t + P.log_eta.reshape(eta_shape)
        for k in range(1, K):
            shape = [1] * (K + 1)
            shape[k] = n
            log_t = log_t + P.log_a[k - 1].reshape(shape)
        log_t = log_t - P.log_z
        return cls(P.grid, K, np.exp(log_t))

    def marginal_mass(self, k: int) -> np.ndarray:
        axes = tuple(a for a in range(self.K + 1) if a != k)
        return self.table.sum(axis=axes)

    def endpoint_mass(self) -> np.ndarray:
        axes = tuple(range(1, self.K))
        return self.table.sum(axis=axes)

    def entropy_against(self, other: "FullJointLaw") -> float:
        p = self.table.reshape(-1)
        r = other.table.reshape(-1)
        charged = p > 0.0
        if np.any(r[charged] == 0.0):
            return np.inf
        return float(np.sum(p[charged] * np.log(p[charged] / r[charged])))

    def total_variation(self, other: "FullJointLaw") -> float:
        return 0.5 * float(np.abs(self.table - other.table).sum())


def _check_budget(n: int, K: int):
    if n ** (K + 1) > MAX_TABLE:
        raise ValueError(f"path table of size {n ** (K + 1)} exceeds the oracle budget")


def enumerate_conditional(law: FullJointLaw, condition: dict) -> FullJointLaw:
    """Exact conditional law given {slice index: state index} constraints.

    The returned table keeps the full shape, with mass only on paths matching
    the condition.
    """
    table = law.table.copy()
    for k, state in condition.items():
        sl = [slice(None)] * (law.K + 1)
        keep = np.zeros(table.shape[k], dtype=bool)
        keep[state] = True
        sl[k] = ~keep
        table[tuple(sl)] = 0.0
    total = table.sum()
    if total <= 0.0:
        raise ValueError(f"conditioning on a zero-probability event: {condition}")
    return FullJointLaw(law.grid, law.K, table / total)


class _ConstraintOps:
    """Linear constraint maps for the path simplex.

    Constraints are the endpoint-pair masses (X_0, X_K) = gamma and the
    interior slice masses X_k = M_k; A applies them, A^T lifts multipliers
    back to path space.
    """

    def __init__(self, grid: GridSpec, K: int, gamma_mass: np.ndarray, target_mass: list):
        self.grid = grid
        self.K = K
        self.n = grid.n_cells
        self.gamma_mass = gamma_mass
        self.target_mass = target_mass

    def residuals(self, table: np.ndarray):
        K = self.K
        coup = table.sum(axis=tuple(range(1, K)))
        res = [coup - self.gamma_mass]
        for k in range(1, K):
            axes = tuple(a for a in range(K + 1) if a != k)
            res.append(table.sum(axis=axes) - self.target_mass[k - 1])
        return res

    def lift(self, coup_mult: np.ndarray, slice_mults: list) -> np.ndarray:
        K = self.K
        shape = [1] * (K + 1)
        shape[0] = self.n
        shape[K] = self.n
        out = coup_mult.reshape(shape)
        for k in range(1, K):
            shape = [1] * (K + 1)
            shape[k] = self.n
            out = out + slice_mults[k - 1].reshape(shape)
        return out


def brute_force_solve(gamma: Coupling, targets, nu: float, grid: GridSpec, K: int,
                      kkt_tol: float = 1e-10, max_iter: int = 500_000):
    """Constrained entropy minimizer on the full path simplex.

    Returns ``(law, info)`` where info holds the optimal entropy, the KKT
    residual, the factorization defect of log(P/R) against the potential
    span, and the objective from the independent dual-ascent path.
    """
    n = grid.n_cells
    _check_budget(n, K)
    ref = FullJointLaw.reference(grid, nu, K)
    gamma_mass = gamma.mass_values()
    if targets is None:
        target_mass = [np.full(n, grid.cell_measure) for _ in range(K - 1)]
    else:
        target_mass = [t.mass_values().reshape(-1) for t in targets]
    ops = _ConstraintOps(grid, K, gamma_mass, target_mass)

    log_r = np.log(ref.table)

    table, kkt, iters = _mirror_descent(log_r, ops, kkt_tol, max_iter)
    dual_sol = _dual_ascent(log_r, ops)

    law = FullJointLaw(grid, K, table)
    value = law.entropy_against(ref)
    info = {
        "value": value,
        "value_dual": dual_sol["value"],
        "kkt_residual": kkt,
        "iterations": iters,
        "factorization_defect": _factorization_defect(table, log_r, ops),
    }
    return law, info


def _split_mults(mults: np.ndarray, ops: _ConstraintOps):
    n, K = ops.n, ops.K
    coup_mult = mults[: n * n].reshape(n, n)
    slice_mults = [mults[n * n + (k - 1) * n: n * n + k * n] for k in range(1, K)]
    return coup_mult, slice_mults


def _dual_objective(mults: np.ndarray, log_r: np.ndarray, ops: _ConstraintOps):
    """Negative Lagrange dual: log-partition of the tilted table minus the
    pairing with the targets; its gradient is the constraint residual."""
    coup_mult, slice_mults = _split_mults(mults, ops)
    tilted = log_r + ops.lift(coup_mult, slice_mults)
    lz = sp_logsumexp(tilted)
    targets = np.concatenate([ops.gamma_mass.reshape(-1)] + list(ops.target_mass))
    value = float(lz - np.dot(mults, targets))
    table = np.exp(tilted - lz)
    res = ops.residuals(table)
    grad = np.concatenate([res[0].reshape(-1)] + list(res[1:]))
    return value, grad


def _dual_ascent(log_r: np.ndarray, ops: _ConstraintOps):
    n, K = ops.n, ops.K
    x0 = np.zeros(n * n + (K - 1) * n)
    out = minimize(_dual_objective, x0, args=(log_r, ops), jac=True, method="L-BFGS-B",
                   options={"maxiter": 20_000, "ftol": 1e-18, "gtol": 1e-13})
    coup_mult, slice_mults = _split_mults(out.x, ops)
    tilted = log_r + ops.lift(coup_mult, slice_mults)
    lz = sp_logsumexp(tilted)
    table = np.exp(tilted - lz)
    value = float(np.sum(table * (tilted - lz - log_r)))
    return {"table": table, "value": value, "mults": out.x}


def _mirror_descent(log_r: np.ndarray, ops: _ConstraintOps, kkt_tol: float,
                    max_iter: int):
    """Primal-dual mirror descent from the reference table.

    The primal step is the exact entropic argmin of the Lagrangian at the
    current multipliers (so every iterate is a tilt of the reference); the
    multipliers move along the constraint residual with a step adapted by
    backtracking on the dual value.
    """
    n, K = ops.n, ops.K
    mults = np.zeros(n * n + (K - 1) * n)
    value, grad = _dual_objective(mults, log_r, ops)
    step = 1.0
    kkt = np.inf
    for it in range(1, max_iter + 1):
        kkt = float(np.abs(grad).max())
        if kkt <= kkt_tol:
            break
        accepted = False
        while step > 1e-8:
            trial = mults - step * grad
            t_value, t_grad = _dual_objective(trial, log_r, ops)
            sufficient = t_value <= value - 0.25 * step * float(np.dot(grad, grad))
            # once decreases fall below double resolution, a step that still
            # shrinks the residual keeps the linear contraction going
            plateau = (
                t_value <= value + 1e-14 * max(1.0, abs(value))
                and float(np.abs(t_grad).max()) < kkt
            )
            if sufficient or plateau:
                mults, value, grad = trial, t_value, t_grad
                step = min(step * 1.3, 1e6)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    coup_mult, slice_mults = _split_mults(mults, ops)
    log_p = log_r + ops.lift(coup_mult, slice_mults)
    log_p = log_p - sp_logsumexp(log_p)
    return np.exp(log_p), kkt, it


def _factorization_defect(table: np.ndarray, log_r: np.ndarray, ops: _ConstraintOps) -> float:
    """Range of log(P/R) minus its best potential-span fit on charged paths.

    The optimizer's density w.r.t. the reference must depend on the path only
    through (x_0, x_K) and the separate interior states; the defect measures
    the residual after projecting onto that span.
    """
    n, K = ops.n, ops.K
    charged = table > 1e-300
    logratio = np.where(charged, np.log(np.where(charged, table, 1.0)) - log_r, 0.0)
    idx = np.argwhere(charged)
    rows = idx.shape[0]
    ncols = n * n + (K - 1) * n + 1
    A = np.zeros((rows, ncols))
    A[np.arange(rows), idx[:, 0] * n + idx[:, K]] = 1.0
    for k in range(1, K):
        A[np.arange(rows), n * n + (k - 1) * n + idx[:, k]] += 1.0
    A[:, -1] = 1.0
    b = logratio[charged]
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    return float(resid.max() - resid.min()) if rows else 0.0
