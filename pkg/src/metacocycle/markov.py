"""Markov chains in random environments induced by metastable cocycles.

Transition matrices are column-stochastic and act on probability column
vectors. For ``m`` states with neighbor-only leakage,

    M = I - eps * Delta + eps * N,   Delta_ii = sum_j beta_ij,   N_ij = beta_ji,

where ``beta_ij`` is the leak rate from state ``i`` to state ``j``. In the
two-state case ``beta_L = beta_12`` and ``beta_R = beta_21``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .driving import DrivingSystem, WindowError

NULLSPACE_TOL = 1e-10


class ChainError(ValueError):
    pass


class SingularDeltaError(ChainError):
    """The averaged exit-rate matrix is singular."""


class TruncationError(ChainError):
    """Not enough fibers available to certify a series truncation."""

    def __init__(self, msg: str, required: int):
        super().__init__(msg)
        self.required = required


def _leak_table_to_beta(vec, m: int) -> np.ndarray:
    t = np.asarray(vec, dtype=float).reshape(m, 2)
    beta = np.zeros((m, m))
    for i in range(m):
        if i > 0:
            beta[i, i - 1] = t[i, 0]
        if i < m - 1:
            beta[i, i + 1] = t[i, 1]
    if t[0, 0] != 0 or t[-1, 1] != 0:
        raise ChainError("leak past the outer states is not allowed")
    return beta


@dataclass(frozen=True, eq=False)
class EnvChain:
    """Chain whose leak-rate table ``beta`` depends on the fiber through its atom.

    ``tables[a]`` is the ``m x m`` beta table of atom ``a`` of ``driving``.
    """

    m: int
    driving: DrivingSystem
    tables: np.ndarray
    epsilon: float

    def __post_init__(self):
        t = np.asarray(self.tables, dtype=float)
        if t.shape != (self.driving.n_atoms, self.m, self.m):
            raise ChainError(f"beta tables must have shape ({self.driving.n_atoms}, {self.m}, {self.m})")
        if np.any(t < 0) or np.any(~np.isfinite(t)):
            raise ChainError("beta entries must be finite and nonnegative")
        i, j = np.indices((self.m, self.m))
        if np.any(t[:, np.abs(i - j) != 1] != 0):
            raise ChainError("beta_ij must vanish unless |i - j| = 1")
        exit_rates = t.sum(axis=2)
        if self.epsilon < 0 or np.any(1.0 - self.epsilon * exit_rates < 0):
            raise ChainError(f"epsilon={self.epsilon} makes a diagonal entry negative")
        object.__setattr__(self, "tables", t)

    @classmethod
    def from_beta(cls, driving: DrivingSystem, to_beta: Callable, m: int, epsilon: float) -> "EnvChain":
        tables = np.array([to_beta(v) for v in driving.values])
        return cls(m, driving, tables, epsilon)

    @classmethod
    def two_state(cls, driving: DrivingSystem, epsilon: float, left: int = 0, right: int = 1, scale: float = 1.0):
        """``beta_L``, ``beta_R`` read from value-vector components ``left``, ``right``."""
        def to_beta(v):
            return scale * np.array([[0.0, v[left]], [v[right], 0.0]])
        return cls.from_beta(driving, to_beta, 2, epsilon)

    @classmethod
    def from_tent_driving(cls, driving: DrivingSystem, epsilon: float) -> "EnvChain":
        """Paired tent parameters ``(a, b)``: ``beta_L = b``, ``beta_R = a``."""
        return cls.two_state(driving, epsilon, left=1, right=0)

    @classmethod
    def from_leak_driving(cls, driving: DrivingSystem, m: int, epsilon: float) -> "EnvChain":
        """Flattened ``(left, right)`` leak tables, as used by ``chain_tent``."""
        return cls.from_beta(driving, lambda v: _leak_table_to_beta(v, m), m, epsilon)

    def with_epsilon(self, epsilon: float) -> "EnvChain":
        return EnvChain(self.m, self.driving, self.tables, epsilon)

    def beta(self, k: int) -> np.ndarray:
        return self.tables[int(self.driving.labels(k))]

    def betas(self, ks) -> np.ndarray:
        return self.tables[self.driving.labels(ks)]

    @property
    def beta_bound(self) -> float:
        return float(self.tables.max())


def _matrix_from_beta(beta: np.ndarray, eps: float) -> np.ndarray:
    """Transition matrices for a stack of beta tables (last two axes)."""
    m = beta.shape[-1]
    mat = eps * np.swapaxes(beta, -1, -2)
    idx = np.arange(m)
    mat[..., idx, idx] = 1.0 - eps * beta.sum(axis=-1)
    return mat


def transition_matrix(chain: EnvChain, fiber_k: int) -> np.ndarray:
    return _matrix_from_beta(chain.beta(fiber_k), chain.epsilon)


def backward_product(chain: EnvChain, fiber_k: int, n: int) -> np.ndarray:
    """``M_{k-1} M_{k-2} ... M_{k-n}``: the chain run from fiber ``k-n`` up to ``k``."""
    prod = np.eye(chain.m)
    if n == 0:
        return prod
    chain.driving.check_window(fiber_k - n, fiber_k - 1)
    mats = _matrix_from_beta(chain.betas(fiber_k - 1 - np.arange(n)), chain.epsilon)
    for mat in mats:
        prod = prod @ mat
    return prod


def backward_product_closed_form(chain: EnvChain, fiber_k: int, n: int) -> np.ndarray:
    """Two-state backward product from the summed formula (no matrix products).

    With ``g = beta_L + beta_R`` and fibers read backwards from ``k-1``,
    ``S_* = eps * sum_{j<n} beta_*(k-j-1) prod_{i<j} (1 - eps g(k-i-1))``
    and the product is ``[[1 - S_L, S_R], [S_L, 1 - S_R]]``.
    """
    if chain.m != 2:
        raise ChainError("closed form exists for two states only")
    if n == 0:
        return np.eye(2)
    chain.driving.check_window(fiber_k - n, fiber_k - 1)
    b = chain.betas(fiber_k - 1 - np.arange(n))
    bl, br = b[:, 0, 1], b[:, 1, 0]
    eps = chain.epsilon
    surv = np.concatenate([[1.0], np.cumprod(1.0 - eps * (bl + br))[:-1]])
    sl = eps * float(bl @ surv)
    sr = eps * float(br @ surv)
    return np.array([[1.0 - sl, sr], [sl, 1.0 - sr]])


def pi_series(chain: EnvChain, fiber_k: int, tail_tol: float = 1e-12, max_terms: int | None = None):
    """Weight series ``sum_n eps beta_R(k-n-1) prod_{j<n} (1 - eps g(k-j-1))``.

    Truncation is certified by telescoping: each term is at most
    ``P_n - P_{n+1}`` with ``P_n`` the running survival product, so the tail
    after ``n`` terms is at most ``P_n``. Summation stops once ``P_n <= tail_tol``.

    Returns ``(value, terms, tail_bound)``.
    """
    if chain.m != 2:
        raise ChainError("pi_series is defined for two-state chains")
    eps = chain.epsilon
    if eps <= 0:
        raise ChainError("pi_series needs eps > 0")
    if _required_terms(chain, tail_tol) < 0:
        raise ChainError("averaged beta_L + beta_R vanishes; the series does not converge")
    total, surv, used = 0.0, 1.0, 0
    chunk = 4096
    limit = max_terms if max_terms is not None else 1 << 40
    while surv > tail_tol:
        if used >= limit:
            raise TruncationError(f"tail bound {surv:.3e} > {tail_tol:.1e} after {used} terms", _required_terms(chain, tail_tol))
        cnt = min(chunk, limit - used)
        ks = fiber_k - 1 - used - np.arange(cnt)
        try:
            b = chain.betas(ks)
        except WindowError as exc:
            need = _required_terms(chain, tail_tol)
            raise TruncationError(
                f"window too small to certify tail <= {tail_tol:.1e}; about {need} terms needed", need
            ) from exc
        bl, br = b[:, 0, 1], b[:, 1, 0]
        surv_run = surv * np.concatenate([[1.0], np.cumprod(1.0 - eps * (bl + br))])
        # terms stop contributing once the survival product is below tail_tol
        stop = np.flatnonzero(surv_run[:-1] <= tail_tol)
        upto = int(stop[0]) if stop.size else cnt
        total += eps * float(br[:upto] @ surv_run[:upto])
        surv = float(surv_run[upto])
        used += upto
    return total, used, surv


def _required_terms(chain: EnvChain, tail_tol: float) -> int:
    g = sum(p * (t[0, 1] + t[1, 0]) for p, t in zip(chain.driving.probs, chain.tables))
    if g <= 0:
        return -1
    return int(np.ceil(np.log(tail_tol) / np.log1p(-chain.epsilon * g)))


def p_recursion(chain: EnvChain, fiber_k: int, n: int, p_start: float) -> float:
    """``p <- p (1 - eps g) + eps beta_R`` along fibers ``k-n, ..., k-1``."""
    if not 0.0 <= p_start <= 1.0:
        raise ChainError("p_start must lie in [0, 1]")
    if n == 0:
        return float(p_start)
    chain.driving.check_window(fiber_k - n, fiber_k - 1)
    b = chain.betas(fiber_k - n + np.arange(n))
    bl, br = b[:, 0, 1], b[:, 1, 0]
    eps = chain.epsilon
    p = float(p_start)
    for gl, gr in zip(bl.tolist(), br.tolist()):
        p = p * (1.0 - eps * (gl + gr)) + eps * gr
    return p


def survival(chain: EnvChain, fiber_k: int, n: int) -> float:
    """``prod (1 - eps g)`` over fibers ``k-n, ..., k-1``."""
    b = chain.betas(fiber_k - n + np.arange(n))
    return float(np.prod(1.0 - chain.epsilon * (b[:, 0, 1] + b[:, 1, 0])))


def pi_limit(ds: DrivingSystem, left: int = 0, right: int = 1) -> float:
    """``int beta_R / int (beta_L + beta_R)`` from exact averages of two components."""
    bl, br = ds.average_observable(left), ds.average_observable(right)
    if bl + br == 0:
        raise SingularDeltaError("averaged beta_L + beta_R vanishes")
    return br / (bl + br)


def delta_n_decompose(chain: EnvChain, fiber_k: int):
    beta = chain.beta(fiber_k)
    return _delta_n(beta)


def _delta_n(beta: np.ndarray):
    delta = np.diag(beta.sum(axis=1))
    n_mat = beta.T.copy()
    return delta, n_mat


def averaged_decomposition(chain: EnvChain):
    """Exact ``(int Delta dP, int N dP)`` from atom probabilities."""
    mean_beta = np.tensordot(chain.driving.probs, chain.tables, axes=1)
    return _delta_n(mean_beta)


def solve_v0(delta_avg, n_avg, absorbing: bool = False) -> np.ndarray:
    """Normalized nonnegative kernel vector of ``I - delta_avg^{-1} n_avg``.

    The kernel is read off an SVD; exactly one singular value may fall below
    ``NULLSPACE_TOL`` times the largest. A singular ``delta_avg`` raises
    unless ``absorbing`` is set and exactly one diagonal entry vanishes, in
    which case that state absorbs all mass.
    """
    delta_avg = np.asarray(delta_avg, dtype=float)
    n_avg = np.asarray(n_avg, dtype=float)
    m = delta_avg.shape[0]
    diag = np.diag(delta_avg)
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        if absorbing and zero.size == 1:
            v = np.zeros(m)
            v[zero[0]] = 1.0
            return v
        raise SingularDeltaError(f"averaged Delta is singular (zero exit rate in states {zero.tolist()})")
    a = np.eye(m) - np.linalg.solve(delta_avg, n_avg)
    _, s, vh = np.linalg.svd(a)
    small = s <= NULLSPACE_TOL * max(s[0], 1.0)
    if small.sum() != 1:
        raise ChainError(f"kernel dimension {int(small.sum())} != 1 (singular values {s})")
    v = vh[-1]
    v = v / v.sum()
    if np.any(v < -1e-12):
        raise ChainError(f"kernel vector has negative entries: {v}")
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


@dataclass
class ChainLimit:
    v0: np.ndarray
    delta_avg: np.ndarray
    n_avg: np.ndarray

    def residual(self) -> float:
        a = np.eye(len(self.v0)) - np.linalg.solve(self.delta_avg, self.n_avg)
        return float(np.abs(a @ self.v0).max())


def chain_limit(chain: EnvChain, absorbing: bool = False) -> ChainLimit:
    d, n = averaged_decomposition(chain)
    return ChainLimit(solve_v0(d, n, absorbing=absorbing), d, n)


@dataclass
class LimitRow:
    epsilon: float
    fiber: int
    n: int
    col: int
    max_dist_to_v0: float
    saturated: bool

    CSV_COLUMNS = ("epsilon", "fiber", "n", "col", "max_dist_to_v0")

    def csv_fields(self) -> list[str]:
        return [f"{self.epsilon:.12g}", str(self.fiber), str(self.n), str(self.col), f"{self.max_dist_to_v0:.12e}"]


def saturation_horizon(chain: EnvChain, epsilon: float) -> float:
    """``20 / (eps * smallest positive averaged exit rate)``."""
    d, _ = averaged_decomposition(chain)
    pos = np.diag(d)[np.diag(d) > 0]
    if epsilon <= 0 or pos.size == 0:
        return np.inf
    return 20.0 / (epsilon * pos.min())


def chain_limit_check(chain: EnvChain, eps_list: Sequence[float], n: int, fibers: Sequence[int]) -> list[LimitRow]:
    """Max-norm distance of every backward-product column to ``v0``, per eps and fiber."""
    v0 = chain_limit(chain).v0
    rows = []
    for eps in eps_list:
        c = chain.with_epsilon(eps)
        sat = n >= saturation_horizon(chain, eps)
        for k in fibers:
            prod = backward_product(c, k, n)
            for j in range(chain.m):
                rows.append(LimitRow(eps, k, n, j, float(np.abs(prod[:, j] - v0).max()), sat))
    return rows


def format_v0(v0) -> str:
    return ", ".join(f"{x:.12g}" for x in v0)
