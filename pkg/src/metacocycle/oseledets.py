"""Top and second Oseledets data of Ulam-discretized transfer operator cocycles.

The random invariant density is obtained by pulling the uniform density back
along the base orbit, ``phi_k ~ L_{k-1} ... L_{k-N} 1``. The second function
comes from iterating a zero-mean seed the same way: transfer operators keep
integrals, so the zero-mean subspace is invariant. In floating point the
roundoff component along ``phi`` grows relative to the iterate, so the mean
is subtracted again after every renormalization.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import markov
from .driving import DrivingSystem
from .maps import PiecewiseLinearMap, chain_tent, paired_tent
from .transfer import Density, UlamOperator, ulam_matrix

CONVERGENCE_TOL = 1e-8
HORIZON_CAP = 1 << 16

FAMILIES = ("paired_tent", "chain_tent")


class WeightError(ZeroDivisionError):
    """Limit weights undefined because the averaged leak rates vanish."""


def fiber_map(family: str, params, epsilon: float, m: int = 2) -> PiecewiseLinearMap:
    """Fiber map for one value vector.

    ``paired_tent`` reads ``(a, b)``; ``chain_tent`` reads the flattened
    ``(left, right)`` leak table of length ``2m``. Leaks are scaled by ``epsilon``.
    """
    params = np.asarray(params, dtype=float)
    if family == "paired_tent":
        a, b = params[:2]
        return paired_tent(epsilon * a, epsilon * b)
    if family == "chain_tent":
        return chain_tent(m, epsilon * params.reshape(m, 2))
    raise ValueError(f"unknown map family {family!r}")


class OperatorCocycle:
    """Fiber operators ``k -> L_{sigma^k omega}`` built lazily, one per atom.

    The driving system has finite range, so there are at most ``n_atoms``
    distinct matrices; they are cached behind a lock.
    """

    def __init__(self, driving: DrivingSystem, family: str, epsilon: float, grid_n: int, m: int = 2):
        if grid_n % 2:
            raise ValueError("grid_n must be even so that boundary points are grid nodes")
        if family not in FAMILIES:
            raise ValueError(f"unknown map family {family!r}")
        self.driving = driving
        self.family = family
        self.epsilon = float(epsilon)
        self.grid_n = int(grid_n)
        self.m = m
        self._cache: dict[int, UlamOperator] = {}
        self._lock = threading.Lock()

    def map_for_atom(self, label: int) -> PiecewiseLinearMap:
        return fiber_map(self.family, self.driving.values[label], self.epsilon, self.m)

    def atom_operator(self, label: int) -> UlamOperator:
        op = self._cache.get(label)
        if op is None:
            with self._lock:
                op = self._cache.get(label)
                if op is None:
                    op = ulam_matrix(self.map_for_atom(label), self.grid_n)
                    self._cache[label] = op
        return op

    def operator(self, k: int) -> UlamOperator:
        return self.atom_operator(int(self.driving.labels(k)))

    def operators(self, start: int, stop: int) -> list:
        """Sparse matrices for fibers ``start, ..., stop-1``."""
        self.driving.check_window(start, stop - 1)
        labels = self.driving.labels(np.arange(start, stop))
        mats = {lab: self.atom_operator(int(lab)).matrix for lab in np.unique(labels)}
        return [mats[lab] for lab in labels]

    def maps(self, start: int, stop: int) -> list[PiecewiseLinearMap]:
        labels = self.driving.labels(np.arange(start, stop))
        return [self.map_for_atom(int(lab)) for lab in labels]


@dataclass
class CocycleRun:
    cocycle: OperatorCocycle
    horizon_N: int = 256
    fiber_indices: Sequence[int] = (0,)
    renorm_every: int = 1
    adaptive: bool = True
    cap: int = HORIZON_CAP
    tol: float = CONVERGENCE_TOL

    def __post_init__(self):
        if self.horizon_N < 1:
            raise ValueError("horizon_N must be >= 1")
        if self.horizon_N % self.renorm_every:
            raise ValueError("renorm_every must divide horizon_N")

    @property
    def epsilon(self) -> float:
        return self.cocycle.epsilon

    @property
    def grid_n(self) -> int:
        return self.cocycle.grid_n


@dataclass
class Pullback:
    density: Density
    horizon: int
    converged: bool
    lambda1: float
    doubling_gap: float


@dataclass
class SecondFunction:
    psi: Density
    lambda2: float
    horizon: int
    converged: bool
    doubling_gap: float
    seed_flipped: bool  # sign flip applied to meet the I_L convention
    sign_undetermined: bool
    max_abs_integral: float  # over all iterates, relative to their L1 norm
    log_growth_sum: float  # sum of log |rho| over the final run


@dataclass
class SpectralResult:
    fiber: int
    phi: Density
    psi: Density
    lambda1: float
    lambda2: float
    rho_log_sum: float
    horizon: int
    flags: list = field(default_factory=list)


def _push(mats, v, renorm_every, h):
    """Iterate ``v`` through ``mats``, renormalizing the integral every few steps."""
    logs = []
    for step, mat in enumerate(mats, start=1):
        v = mat @ v
        if step % renorm_every == 0:
            s = h * v.sum()
            logs.append(np.log(s))
            v = v / s
    return v, np.array(logs)


def _pullback_once(run: CocycleRun, k: int, n: int):
    mats = run.cocycle.operators(k - n, k)
    v = Density.uniform(run.grid_n).values
    r = run.renorm_every if n % run.renorm_every == 0 else 1
    v, logs = _push(mats, v, r, 2.0 / run.grid_n)
    v = v / (v.sum() * (2.0 / run.grid_n))
    return v, float(logs.sum() / n)


def pullback_density(run: CocycleRun, fiber_k: int) -> Pullback:
    """Random invariant density at fiber ``fiber_k`` by pull-back of the uniform density.

    With ``run.adaptive`` the horizon is doubled from ``run.horizon_N`` until
    the L1 change between horizons ``N`` and ``2N`` is below ``run.tol`` or the
    cap is reached (then ``converged`` is False). ``lambda1`` is the average
    log of the normalizing factors.
    """
    n = run.horizon_N
    v, lam1 = _pullback_once(run, fiber_k, n)
    h = 2.0 / run.grid_n
    gap = np.inf
    while True:
        v2, lam1_2 = _pullback_once(run, fiber_k, 2 * n)
        gap = h * float(np.abs(v2 - v).sum())
        v, lam1, n = v2, lam1_2, 2 * n
        if gap <= run.tol or not run.adaptive or 2 * n > run.cap:
            break
    return Pullback(Density(run.grid_n, v), n, gap <= run.tol, lam1, gap)


def zero_mean_seed(grid_n: int) -> Density:
    """``1/2 1_{I_L} - 1/2 1_{I_R}`` on the grid."""
    return Density.indicator(grid_n, -1.0, 0.0) * 0.5 - Density.indicator(grid_n, 0.0, 1.0) * 0.5


def _second_once(run: CocycleRun, k: int, n: int, seed: np.ndarray):
    mats = run.cocycle.operators(k - n, k)
    h = 2.0 / run.grid_n
    r = run.renorm_every if n % run.renorm_every == 0 else 1
    burn = n // 4
    v = seed / (h * np.abs(seed).sum())
    logs, ends = [], []
    worst = 0.0
    for step, mat in enumerate(mats, start=1):
        v = mat @ v
        if step % r:
            continue
        nv = h * np.abs(v).sum()
        if nv == 0.0:
            raise FloatingPointError("zero-mean iterate collapsed to 0")
        drift = h * v.sum()
        worst = max(worst, abs(drift) / nv)
        logs.append(np.log(nv))
        ends.append(step)
        # roundoff along phi would grow like 1/|rho| per step; restore zero mean
        v = (v - 0.5 * drift) / nv
    logs, ends = np.array(logs), np.array(ends)
    keep = ends - r >= burn
    lam2 = float(logs[keep].sum() / (r * keep.sum()))
    return v, lam2, worst, float(logs.sum())


def second_function(run: CocycleRun, fiber_k: int, seed: Density | None = None) -> SecondFunction:
    """Second Oseledets function and exponent at fiber ``fiber_k``.

    A zero-mean seed is pushed through ``L_{k-N}, ..., L_{k-1}`` and
    renormalized in L1 at each step. The exponent is the average log growth
    after discarding the first quarter of the run. The output has unit L1
    norm, zero integral and positive mass on ``I_L``.
    """
    s = (seed or zero_mean_seed(run.grid_n)).values
    if abs(s.sum()) * (2.0 / run.grid_n) > 1e-12 * np.abs(s).sum() * (2.0 / run.grid_n):
        raise ValueError("seed must have zero integral")
    n = run.horizon_N
    v, lam2, worst, logsum = _second_once(run, fiber_k, n, s)
    h = 2.0 / run.grid_n
    while True:
        v2, lam2_2, worst2, logsum = _second_once(run, fiber_k, 2 * n, s)
        # compare directions up to sign
        sgn = 1.0 if v2 @ v >= 0 else -1.0
        gap = h * float(np.abs(v2 - sgn * v).sum())
        v, lam2, n, worst = v2, lam2_2, 2 * n, max(worst, worst2)
        if gap <= run.tol or not run.adaptive or 2 * n > run.cap:
            break
    left_mass = h * float(v[: run.grid_n // 2].sum())
    undetermined = abs(left_mass) < 1e-12
    flipped = left_mass < 0
    if flipped:
        v = -v
    return SecondFunction(
        psi=Density(run.grid_n, v),
        lambda2=lam2,
        horizon=n,
        converged=gap <= run.tol,
        doubling_gap=gap,
        seed_flipped=flipped,
        sign_undetermined=undetermined,
        max_abs_integral=worst,
        log_growth_sum=logsum,
    )


def limit_weights(ds: DrivingSystem, family: str = "paired_tent", m: int = 2) -> np.ndarray:
    """Weights of the initially invariant densities in the ``eps -> 0`` limit."""
    if family == "paired_tent":
        ia, ib = ds.average_observable(0), ds.average_observable(1)
        if ia + ib == 0:
            raise WeightError("average of a + b is zero; the limit weights are undefined")
        return np.array([ia / (ia + ib), ib / (ia + ib)])
    if family == "chain_tent":
        chain = markov.EnvChain.from_leak_driving(ds, m, epsilon=0.0)
        return markov.chain_limit(chain).v0
    raise ValueError(f"unknown map family {family!r}")


def theoretical_phi0(ds: DrivingSystem, grid_n: int, family: str = "paired_tent", m: int = 2) -> Density:
    """Limiting random invariant density ``sum_i c_i 1_{I_i} / |I_i|`` on the grid."""
    c = limit_weights(ds, family, m)
    bps = np.linspace(-1.0, 1.0, m + 1)
    out = Density.zeros(grid_n)
    for ci, lo, hi in zip(c, bps[:-1], bps[1:]):
        out = out + Density.indicator(grid_n, lo, hi) * (ci / (hi - lo))
    return out


def theoretical_psi0(grid_n: int) -> Density:
    return zero_mean_seed(grid_n)


def spectral_data(run: CocycleRun, fiber_k: int) -> SpectralResult:
    pb = pullback_density(run, fiber_k)
    sf = second_function(run, fiber_k)
    flags = []
    if not pb.converged:
        flags.append("phi_not_converged")
    if not sf.converged:
        flags.append("psi_not_converged")
    if sf.sign_undetermined:
        flags.append("sign_undetermined")
    return SpectralResult(
        fiber=fiber_k,
        phi=pb.density,
        psi=sf.psi,
        lambda1=pb.lambda1,
        lambda2=sf.lambda2,
        rho_log_sum=sf.log_growth_sum,
        horizon=max(pb.horizon, sf.horizon),
        flags=flags,
    )


@dataclass
class SweepRow:
    epsilon: float
    fiber: int
    grid_n: int
    horizon: int
    l1_phi_dist: float
    l1_psi_dist: float
    lambda1: float
    lambda2: float
    flags: list
    psi_integral: float = 0.0
    psi_left_mass: float = 0.0

    CSV_COLUMNS = ("epsilon", "fiber", "grid_n", "horizon", "l1_phi_dist", "l1_psi_dist", "lambda2", "flags")

    def csv_fields(self) -> list[str]:
        return [
            f"{self.epsilon:.12g}",
            str(self.fiber),
            str(self.grid_n),
            str(self.horizon),
            f"{self.l1_phi_dist:.12e}",
            f"{self.l1_psi_dist:.12e}",
            f"{self.lambda2:.12e}",
            ";".join(self.flags),
        ]


def default_grid_rule(eps: float, minimum: int = 1024, factor: float = 16.0) -> int:
    """``max(minimum, factor/eps)`` rounded up to an even integer."""
    n = minimum if eps <= 0 else max(minimum, int(np.ceil(factor / eps)))
    return n + (n % 2)


def convergence_sweep(
    ds: DrivingSystem,
    family: str,
    eps_list: Sequence[float],
    grid_rule: Callable[[float], int] = default_grid_rule,
    fibers: Sequence[int] = (0,),
    m: int = 2,
    horizon_N: int = 256,
    renorm_every: int = 1,
    threads: int = 1,
) -> list[SweepRow]:
    """Distances of computed ``phi``, ``psi`` to their limits, plus exponents, per (eps, fiber)."""
    cells = []
    for eps in eps_list:
        cocycle = OperatorCocycle(ds, family, eps, grid_rule(eps), m)
        run = CocycleRun(cocycle, horizon_N=horizon_N, fiber_indices=list(fibers), renorm_every=renorm_every)
        for k in fibers:
            cells.append((run, k))
    phi0_cache: dict[int, Density] = {}
    for run, _ in cells:
        if run.grid_n not in phi0_cache:
            phi0_cache[run.grid_n] = theoretical_phi0(ds, run.grid_n, family, m)

    def work(cell):
        run, k = cell
        res = spectral_data(run, k)
        phi0 = phi0_cache[run.grid_n]
        psi0 = theoretical_psi0(run.grid_n)
        return SweepRow(
            epsilon=run.epsilon,
            fiber=k,
            grid_n=run.grid_n,
            horizon=res.horizon,
            l1_phi_dist=(res.phi - phi0).l1_norm(),
            l1_psi_dist=(res.psi - psi0).l1_norm(),
            lambda1=res.lambda1,
            lambda2=res.lambda2,
            flags=res.flags,
            psi_integral=res.psi.integral(),
            psi_left_mass=res.psi.mass_on(-1.0, 0.0),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    rows.sort(key=lambda r: (-r.epsilon, r.fiber))
    return rows


def monotone_violations(rows: Sequence[SweepRow], column: str, slack: float = 0.10) -> list[tuple]:
    """Consecutive positive-eps pairs per fiber where the distance grows by more than ``slack``."""
    out = []
    for k in sorted({r.fiber for r in rows}):
        seq = [r for r in rows if r.fiber == k and r.epsilon > 0]
        seq.sort(key=lambda r: -r.epsilon)
        for r0, r1 in zip(seq, seq[1:]):
            d0, d1 = getattr(r0, column), getattr(r1, column)
            if d1 > (1.0 + slack) * d0:
                out.append((k, r0.epsilon, r1.epsilon, d0, d1))
    return out
