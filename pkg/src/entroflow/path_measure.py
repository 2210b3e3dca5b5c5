"""Discrete-time path measures on the torus in factored (potential) form.

A measure over chains (x_0, ..., x_K) is stored as the reversible Brownian
chain of diffusivity nu (uniform start, heat-kernel steps of length 1/K)
tilted by an endpoint potential eta(x_0, x_K) and interior potentials
a_k(x_k).  All potentials live in log space and every reduction is a
log-sum-exp, since the kernels decay exponentially and linear-domain
messages underflow at moderate K and nu.

Messages cached per measure (n = N^d states, all shape (n, n)):

* ``lphi[k][x, z]``   log weight of k-step chains x -> z, interior tilts
  strictly between 0 and k included,
* ``lpsi[k][z, y]``   log weight of chains z -> y over steps k..K, interior
  tilts strictly between k and K included,
* ``lfwd[k][z, y]``   forward message carrying the endpoint label:
  logsumexp_x of (start mass + eta(x, y) + lphi[k][x, z]).

Marginals, pair and triple marginals, the path entropy and conditional
bridges are all exact functions of these messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import Density
from .torus import GridSpec, compose_steps, heat_kernel, kernel_matrix

NEG_INF = -np.inf


def log_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """(A ⊕ B)[i, k] = logsumexp_j (A[i, j] + B[j, k]).

    Row/column max shifts make every product term at most 1, after which the
    sum runs in linear domain through BLAS; -inf entries pass through as
    empty terms.
    """
    sa = A.max(axis=1, keepdims=True)
    sb = B.max(axis=0, keepdims=True)
    sa_safe = np.where(np.isfinite(sa), sa, 0.0)
    sb_safe = np.where(np.isfinite(sb), sb, 0.0)
    prod = np.exp(A - sa_safe) @ np.exp(B - sb_safe)
    with np.errstate(divide="ignore"):
        out = np.log(prod)
    return out + sa_safe + sb_safe


def logsumexp(arr: np.ndarray, axis=None):
    shift = np.max(arr, axis=axis, keepdims=True)
    shift_safe = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(arr - shift_safe).sum(axis=axis, keepdims=True)) + shift_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _xlogy_sum(mass: np.ndarray, logvals: np.ndarray) -> float:
    """sum mass * logvals with the convention 0 * (-inf) = 0."""
    charged = mass > 0.0
    return float(np.sum(mass[charged] * logvals[charged]))


def flat_index(grid: GridSpec, x) -> int:
    """Flat cell index from an int or a d-tuple of axis indices."""
    if np.isscalar(x):
        return int(x)
    return int(np.ravel_multi_index(tuple(x), grid.shape))


@dataclass(frozen=True)
class BridgeFactors:
    """Endpoint factors f, g of the restricted-bridge density w.r.t. the
    restricted reference, per the two-sided heat-kernel formula."""

    grid: GridSpec
    nu: float
    K: int
    eps_index: int
    x: int
    y: int
    f: np.ndarray
    g: np.ndarray


class FactoredPathMeasure:
    """Markov-chain path law: reference transitions times scalar potentials.

    Immutable after construction; the normalization constant and all message
    caches are recomputed from scratch whenever a new measure is built.
    """

    def __init__(self, grid: GridSpec, nu: float, K: int, log_eta=None, log_a=None,
                 _shared=None):
        if K < 2:
            raise ValueError(f"need at least K=2 time steps, got {K}")
        if nu <= 0.0:
            raise ValueError("diffusivity must be positive")
        n = grid.n_cells
        self.grid = grid
        self.nu = float(nu)
        self.K = int(K)
        self.log_eta = np.zeros((n, n)) if log_eta is None else np.array(log_eta, dtype=float)
        self.log_a = np.zeros((K - 1, n)) if log_a is None else np.array(log_a, dtype=float)
        if self.log_eta.shape != (n, n):
            raise ValueError("log_eta must have shape (n_cells, n_cells)")
        if self.log_a.shape != (K - 1, n):
            raise ValueError("log_a must have shape (K - 1, n_cells)")
        if _shared is not None:
            self.kernel = _shared["kernel"]
            self._lq = _shared["lq"]
            self._lphi = _shared["lphi"]
            self._lpsi = _shared["lpsi"]
        else:
            self.kernel = heat_kernel(grid, nu, 1.0 / K)
            self._lq = np.log(self.kernel.transition_matrix())
            self._lphi = self._forward_chain()
            self._lpsi = self._backward_chain()
        self._log_mu0 = math.log(grid.cell_measure)
        lB = self._log_mu0 + self.log_eta
        self._lfwd = [log_matmul(self._lphi[k].T, lB) if k > 0 else lB
                      for k in range(K + 1)]
        self.log_z = logsumexp(lB + self._lphi[K])
        if not np.isfinite(self.log_z):
            raise ValueError("measure has zero total mass (endpoint potential kills all paths)")

    # -- message chains ----------------------------------------------------

    def _forward_chain(self):
        n = self.grid.n_cells
        diag = np.full((n, n), NEG_INF)
        np.fill_diagonal(diag, 0.0)
        lphi = [diag]
        cur = diag
        for k in range(self.K):
            step = cur if k == 0 else cur + self.log_a[k - 1][None, :]
            cur = log_matmul(step, self._lq)
            lphi.append(cur)
        return lphi

    def _backward_chain(self):
        n = self.grid.n_cells
        diag = np.full((n, n), NEG_INF)
        np.fill_diagonal(diag, 0.0)
        lpsi = [None] * (self.K + 1)
        lpsi[self.K] = diag
        cur = diag
        for k in range(self.K - 1, -1, -1):
            step = cur if k == self.K - 1 else cur + self.log_a[k][:, None]
            cur = log_matmul(self._lq, step)
            lpsi[k] = cur
        return lpsi

    def _share(self):
        return {"kernel": self.kernel, "lq": self._lq,
                "lphi": self._lphi, "lpsi": self._lpsi}

    def _la(self, k: int) -> np.ndarray:
        """Interior log potential at slice k (zero at the endpoints)."""
        if 1 <= k <= self.K - 1:
            return self.log_a[k - 1]
        return np.zeros(self.grid.n_cells)

    def log_step_matrix(self) -> np.ndarray:
        """One-step log transition mass matrix of the reference chain."""
        return self._lq

    def log_forward(self, k: int) -> np.ndarray:
        """log weight of k-step chains x -> z with interior tilts inside (0, k)."""
        self._check_slice(k)
        return self._lphi[k]

    def log_backward(self, k: int) -> np.ndarray:
        """log weight of chains z -> y over steps k..K with tilts inside (k, K)."""
        self._check_slice(k)
        return self._lpsi[k]

    def interior_potential(self, k: int) -> np.ndarray:
        """Interior log potential at slice k (zeros at the endpoint slices)."""
        self._check_slice(k)
        return self._la(k)

    # -- marginals ----------------------------------------------------------

    def log_slice_joint(self, k: int) -> np.ndarray:
        """Normalized log joint mass of (X_k, X_K), shape (n, n)."""
        self._check_slice(k)
        return self._lfwd[k] + self._la(k)[:, None] + self._lpsi[k] - self.log_z

    def marginal_mass(self, k: int) -> np.ndarray:
        return np.exp(logsumexp(self.log_slice_joint(k), axis=1))

    def marginal(self, k: int) -> Density:
        """Time marginal of X_k as a Density (exact for the factored form)."""
        return Density(self.grid, self.marginal_mass(k).reshape(self.grid.shape)
                       / self.grid.cell_measure)

    def endpoint_coupling(self) -> np.ndarray:
        """Joint density of (X_0, X_K) on grid x grid (sums to 1 times h^{2d})."""
        lpi = self._log_mu0 + self.log_eta + self._lphi[self.K] - self.log_z
        return np.exp(lpi) / self.grid.cell_measure**2

    def pair_marginal(self, k: int) -> np.ndarray:
        """Joint density of (X_k, X_{k+1}), coupling-shaped (n, n)."""
        return self.pair_marginal_mass(k) / self.grid.cell_measure**2

    def pair_marginal_mass(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.K - 1:
            raise ValueError(f"pair slice index {k} outside 0..{self.K - 1}")
        S1 = self._lfwd[k] + self._la(k)[:, None]
        S2 = self._la(k + 1)[:, None] + self._lpsi[k + 1]
        c1 = S1.max(axis=0)
        c2 = S2.max(axis=0)
        c1 = np.where(np.isfinite(c1), c1, 0.0)
        c2 = np.where(np.isfinite(c2), c2, 0.0)
        weights = np.exp(c1 + c2 - self.log_z)
        inner = (np.exp(S1 - c1[None, :]) * weights[None, :]) @ np.exp(S2 - c2[None, :]).T
        return np.exp(self._lq) * inner

    def triple_marginal_mass(self, k: int) -> np.ndarray:
        """Joint mass of (X_0, X_k, X_K), shape (n, n, n), exact by messages."""
        self._check_slice(k)
        lT = (
            self._log_mu0
            + self.log_eta[:, None, :]
            + self._lphi[k][:, :, None]
            + self._la(k)[None, :, None]
            + self._lpsi[k][None, :, :]
            - self.log_z
        )
        return np.exp(lT)

    def triple_marginal(self, k: int) -> np.ndarray:
        """Joint density of (X_0, X_k, X_K)."""
        return self.triple_marginal_mass(k) / self.grid.cell_measure**3

    def _check_slice(self, k: int):
        if not 0 <= k <= self.K:
            raise ValueError(f"slice index {k} outside 0..{self.K}")

    # -- entropy and conditioning -------------------------------------------

    def path_entropy(self) -> float:
        """H(P | R^nu) = E_P[log eta + sum_k log a_k] - log Z, exactly."""
        pi_mass = self.endpoint_coupling() * self.grid.cell_measure**2
        total = _xlogy_sum(pi_mass, self.log_eta)
        for k in range(1, self.K):
            total += _xlogy_sum(self.marginal_mass(k), self.log_a[k - 1])
        return total - self.log_z

    def conditional_bridge(self, x, y) -> "FactoredPathMeasure":
        """Path law conditioned on X_0 = x, X_K = y (endpoint potential pinned)."""
        xi, yi = flat_index(self.grid, x), flat_index(self.grid, y)
        if not np.isfinite(self.log_eta[xi, yi]) or self.endpoint_coupling()[xi, yi] <= 0.0:
            raise ValueError(f"conditioning on a null endpoint pair ({x}, {y})")
        n = self.grid.n_cells
        log_eta = np.full((n, n), NEG_INF)
        log_eta[xi, yi] = 0.0
        return FactoredPathMeasure(self.grid, self.nu, self.K, log_eta, self.log_a,
                                   _shared=self._share())

    # -- serialization --------------------------------------------------------

    def save(self, path):
        from . import dumps

        dumps.save_measure(path, self)

    @classmethod
    def load(cls, path) -> "FactoredPathMeasure":
        from . import dumps

        return dumps.load_measure(path)


def reference_measure(grid: GridSpec, nu: float, K: int) -> FactoredPathMeasure:
    """Reversible Brownian chain: all potentials one, every marginal uniform."""
    return FactoredPathMeasure(grid, nu, K)


def bridge_factors(grid: GridSpec, nu: float, K: int, eps_index: int, x, y) -> BridgeFactors:
    """Endpoint factors of the time-restricted reference bridge.

    For the window [eps, 1 - eps] with eps = eps_index / K, the restricted
    bridge density w.r.t. the restricted reference factorizes through
    f(b) = tau_eps(b - x) / sqrt(tau_1(y - x)) and
    g(c) = tau_eps(y - c) / sqrt(tau_1(y - x)), with tau the discrete
    semigroup composition of the one-step kernel (so the identity is exact
    on the chain).
    """
    if not 0 < eps_index < K / 2:
        raise ValueError(f"eps_index must lie strictly between 0 and K/2, got {eps_index}")
    step = heat_kernel(grid, nu, 1.0 / K)
    tau_eps = compose_steps(step, eps_index)
    tau_one = compose_steps(step, K)
    mat_eps = kernel_matrix(grid, tau_eps.values)
    mat_one = kernel_matrix(grid, tau_one.values)
    xi, yi = flat_index(grid, x), flat_index(grid, y)
    norm = math.sqrt(mat_one[xi, yi])
    f = mat_eps[xi, :].reshape(grid.shape) / norm
    g = mat_eps[:, yi].reshape(grid.shape) / norm
    return BridgeFactors(grid=grid, nu=nu, K=K, eps_index=eps_index, x=xi, y=yi, f=f, g=g)
