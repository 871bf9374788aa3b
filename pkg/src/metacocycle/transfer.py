"""Ulam discretization of Perron-Frobenius operators for piecewise-affine maps.

Densities are cell averages on a uniform grid of ``grid_n`` cells over
[-1, 1]. The Ulam matrix has entries
``M[i, j] = Leb(cell_j & T^{-1} cell_i) / Leb(cell_j)``, computed exactly by
pushing each (cell, branch) piece forward affinely.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .maps import PiecewiseLinearMap


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Density:
    grid_n: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid_n,):
            raise GridError(f"expected {self.grid_n} values, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def h(self) -> float:
        return 2.0 / self.grid_n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.grid_n + 1)

    def integral(self) -> float:
        return self.h * float(self.values.sum())

    def l1_norm(self) -> float:
        return self.h * float(np.abs(self.values).sum())

    def variation(self) -> float:
        return float(np.abs(np.diff(self.values)).sum())

    def mass_on(self, lo: float, hi: float) -> float:
        """Integral over ``[lo, hi]`` (partial cells weighted by overlap)."""
        e = self.edges
        overlap = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None)
        return float(self.values @ overlap)

    def __add__(self, other: "Density") -> "Density":
        _same_grid(self, other)
        return Density(self.grid_n, self.values + other.values)

    def __sub__(self, other: "Density") -> "Density":
        _same_grid(self, other)
        return Density(self.grid_n, self.values - other.values)

    def __mul__(self, c: float) -> "Density":
        return Density(self.grid_n, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Density":
        return Density(self.grid_n, -self.values)

    @classmethod
    def zeros(cls, grid_n: int) -> "Density":
        return cls(grid_n, np.zeros(grid_n))

    @classmethod
    def uniform(cls, grid_n: int) -> "Density":
        """The constant probability density 1/2 on [-1, 1]."""
        return cls(grid_n, np.full(grid_n, 0.5))

    @classmethod
    def indicator(cls, grid_n: int, lo: float, hi: float) -> "Density":
        """Cell averages of the indicator of ``[lo, hi]``."""
        e = np.linspace(-1.0, 1.0, grid_n + 1)
        overlap = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None)
        return cls(grid_n, overlap / (2.0 / grid_n))


def _same_grid(f: Density, g: Density) -> None:
    if f.grid_n != g.grid_n:
        raise GridError(f"grid mismatch: {f.grid_n} vs {g.grid_n}")


def integral(f: Density) -> float:
    return f.integral()


def l1_norm(f: Density) -> float:
    return f.l1_norm()


def variation(f: Density) -> float:
    return f.variation()


def l1_distance(f: Density, g: Density) -> float:
    return (f - g).l1_norm()


@dataclass(frozen=True, eq=False)
class UlamOperator:
    grid_n: int
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __call__(self, f: Density) -> Density:
        return apply(self, f)


def ulam_matrix(tmap: PiecewiseLinearMap, grid_n: int) -> UlamOperator:
    """Exact Ulam matrix of the transfer operator of ``tmap``.

    Every cell is cut at branch endpoints; each piece is an affine image whose
    mass is shared among target cells in proportion to overlap length.
    """
    if grid_n < 2:
        raise GridError("grid_n must be >= 2")
    n = grid_n
    h = 2.0 / n
    edges = np.linspace(-1.0, 1.0, n + 1)
    rows, cols, vals = [], [], []
    for br in tmap.branches:
        j0 = max(int(np.floor((br.lo + 1.0) / h)), 0)
        j1 = min(int(np.ceil((br.hi + 1.0) / h)), n)
        js = np.arange(j0, j1)
        x0 = np.maximum(edges[js], br.lo)
        x1 = np.minimum(edges[js + 1], br.hi)
        keep = x1 > x0
        js, x0, x1 = js[keep], x0[keep], x1[keep]
        if js.size == 0:
            continue
        weight = (x1 - x0) / h  # fraction of source cell carried by this branch
        y0, y1 = br(x0), br(x1)
        ylo = np.clip(np.minimum(y0, y1), -1.0, 1.0)
        yhi = np.clip(np.maximum(y0, y1), -1.0, 1.0)
        i0 = np.clip(np.floor((ylo + 1.0) / h).astype(np.int64), 0, n - 1)
        i1 = np.clip(np.ceil((yhi + 1.0) / h).astype(np.int64) - 1, 0, n - 1)
        span = int((i1 - i0).max()) + 1
        piece_rows, piece_cols, piece_len = [], [], []
        for t in range(span):
            ti = i0 + t
            valid = ti <= i1
            ov = np.minimum(edges[np.minimum(ti + 1, n)], yhi) - np.maximum(edges[np.minimum(ti, n)], ylo)
            valid &= ov > 0
            piece_rows.append(ti[valid])
            piece_cols.append(np.flatnonzero(valid))
            piece_len.append(ov[valid])
        pr = np.concatenate(piece_rows)
        pc = np.concatenate(piece_cols)
        pl = np.concatenate(piece_len)
        # normalize by the realized overlap total so each piece distributes exactly its weight
        tot = np.bincount(pc, weights=pl, minlength=js.size)
        rows.append(pr)
        cols.append(js[pc])
        vals.append(weight[pc] * pl / tot[pc])
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    mat.sum_duplicates()
    return UlamOperator(grid_n=n, matrix=mat)


def apply(op: UlamOperator, f: Density) -> Density:
    if op.grid_n != f.grid_n:
        raise GridError(f"grid mismatch: operator {op.grid_n}, density {f.grid_n}")
    return Density(f.grid_n, op.matrix @ f.values)


def apply_sequence(ops: Sequence[UlamOperator], f: Density) -> Density:
    """Apply ``ops[0]`` first, then ``ops[1]``, ..."""
    v = f.values
    for op in ops:
        v = op.matrix @ v
    return Density(f.grid_n, v)


@dataclass
class LYReport:
    checks: int
    violations: int
    max_ratio: float  # max of observed / bound
    min_slack: float  # min of bound - observed
    worst: dict

    @property
    def ok(self) -> bool:
        return self.violations == 0


LY_CONTRACTION = 0.75
LY_CONSTANT = 26.0


def ly_bound(var_f: float, norm_f: float, n: int) -> float:
    """Bound for ``n`` double-steps: ``(3/4)^n var + 26 ||f||`` (normalized Lebesgue)."""
    return LY_CONTRACTION**n * var_f + LY_CONSTANT * norm_f


def random_step_density(grid_n: int, rng: np.random.Generator) -> Density:
    """Random signed step function with a handful of jumps at random cells."""
    k = int(rng.integers(1, 40))
    cuts = np.sort(rng.choice(np.arange(1, grid_n), size=min(k, grid_n - 1), replace=False))
    levels = rng.normal(size=cuts.size + 1) * rng.uniform(0.1, 20.0)
    if rng.random() < 0.5:
        levels = np.abs(levels)
    vals = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [grid_n]])))
    return Density(grid_n, vals)


def verify_ly(
    cocycle: Sequence[PiecewiseLinearMap],
    trials: int,
    grid_n: int,
    horizons: Sequence[int] = (2, 4, 8),
    seed: int = 0,
    densities: Sequence[Density] | None = None,
) -> LYReport:
    """Check the iterated Lasota-Yorke bound on the Ulam-discretized cocycle.

    For every test density ``f`` and every even horizon ``2n`` the variation
    of ``L^{(2n)} f`` must not exceed ``(3/4)^n Var(f) + 26 ||f||``, the norm
    taken against normalized Lebesgue on [-1, 1].
    """
    if any(hz % 2 for hz in horizons):
        raise ValueError("horizons must be even")
    if max(horizons) > len(cocycle):
        raise ValueError("cocycle shorter than the largest horizon")
    ops = [ulam_matrix(t, grid_n) for t in cocycle]
    rng = np.random.default_rng(seed)
    tests = list(densities or []) + [random_step_density(grid_n, rng) for _ in range(trials)]
    checks = violations = 0
    max_ratio, min_slack, worst = 0.0, np.inf, {}
    for f in tests:
        var_f = f.variation()
        norm_f = 0.5 * f.l1_norm()
        v = f.values
        step = 0
        for hz in sorted(horizons):
            while step < hz:
                v = ops[step].matrix @ v
                step += 1
            observed = float(np.abs(np.diff(v)).sum())
            bound = ly_bound(var_f, norm_f, hz // 2)
            checks += 1
            slack = bound - observed
            if observed > bound:
                violations += 1
            ratio = observed / bound if bound > 0 else (0.0 if observed == 0 else np.inf)
            if ratio > max_ratio:
                max_ratio = ratio
                worst = {"horizon": hz, "observed": observed, "bound": bound, "var": var_f, "norm": norm_f}
            min_slack = min(min_slack, slack)
    return LYReport(checks, violations, max_ratio, float(min_slack), worst)


# -- golden-file dumps ------------------------------------------------------

def save_density(f: Density, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_n", f.grid_n])
        w.writerow(["value"])
        for v in f.values:
            w.writerow([repr(float(v))])


def load_density(path) -> Density:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0][0] != "grid_n" or rows[1] != ["value"]:
        raise GridError(f"{path}: not a density dump")
    n = int(rows[0][1])
    return Density(n, np.array([float(r[0]) for r in rows[2:]]))


def save_operator(op: UlamOperator, path) -> None:
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_n", op.grid_n])
        w.writerow(["row", "col", "value"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])


def load_operator(path) -> UlamOperator:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0][0] != "grid_n" or rows[1] != ["row", "col", "value"]:
        raise GridError(f"{path}: not an operator dump")
    n = int(rows[0][1])
    r = np.array([int(x[0]) for x in rows[2:]], dtype=np.int64)
    c = np.array([int(x[1]) for x in rows[2:]], dtype=np.int64)
    v = np.array([float(x[2]) for x in rows[2:]])
    return UlamOperator(n, sp.csr_matrix((v, (r, c)), shape=(n, n)))
