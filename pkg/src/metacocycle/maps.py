"""Piecewise-affine fiber maps on [-1, 1]: paired tent maps and tent chains.

A map is an ordered list of affine branches tiling [-1, 1] plus the boundary
points splitting [-1, 1] into the initially invariant intervals. Interior
boundary points are fixed by convention and belong to no open branch, which
reproduces ``T(0) = 0`` for the paired tent map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_TOL = 1e-12


class MapError(ValueError):
    """Invalid map parameters or geometry."""


@dataclass(frozen=True)
class Branch:
    lo: float
    hi: float
    slope: float
    intercept: float

    def __call__(self, x):
        return self.slope * x + self.intercept

    @property
    def image(self) -> tuple[float, float]:
        y0, y1 = self(self.lo), self(self.hi)
        return (y0, y1) if y0 <= y1 else (y1, y0)

    def preimage(self, y0: float, y1: float):
        """Closed preimage of ``[y0, y1]`` inside ``[lo, hi]``, or ``None``."""
        x0 = (y0 - self.intercept) / self.slope
        x1 = (y1 - self.intercept) / self.slope
        if x0 > x1:
            x0, x1 = x1, x0
        x0, x1 = max(x0, self.lo), min(x1, self.hi)
        if x0 > x1:
            return None
        return (x0, x1)


@dataclass(frozen=True)
class PiecewiseLinearMap:
    branches: tuple[Branch, ...]
    boundary_points: tuple[float, ...]

    def __post_init__(self):
        br = self.branches
        if not br:
            raise MapError("map needs at least one branch")
        if br[0].lo != -1.0 or br[-1].hi != 1.0:
            raise MapError("branches must cover [-1, 1]")
        for b0, b1 in zip(br, br[1:]):
            if b0.hi != b1.lo:
                raise MapError(f"branches do not tile: {b0.hi} != {b1.lo}")
        for b in br:
            if not b.lo < b.hi:
                raise MapError("empty branch")
            if abs(b.slope) <= 1.0:
                raise MapError(f"branch on [{b.lo}, {b.hi}] is not expanding (slope {b.slope})")
            y0, y1 = b.image
            if y0 < -1.0 - _TOL or y1 > 1.0 + _TOL:
                raise MapError(f"branch on [{b.lo}, {b.hi}] leaves [-1, 1]")
        bp = self.boundary_points
        if bp[0] != -1.0 or bp[-1] != 1.0 or any(q <= p for p, q in zip(bp, bp[1:])):
            raise MapError("boundary points must increase from -1 to 1")

    @property
    def critical_set(self) -> tuple[float, ...]:
        return tuple([b.lo for b in self.branches] + [1.0])

    @property
    def intervals(self) -> list[tuple[float, float]]:
        """The initially invariant intervals ``I_1, ..., I_m``."""
        bp = self.boundary_points
        return list(zip(bp[:-1], bp[1:]))

    @property
    def m(self) -> int:
        return len(self.boundary_points) - 1

    def interval_of(self, x: float) -> int:
        return int(np.clip(np.searchsorted(self.boundary_points, x, side="right") - 1, 0, self.m - 1))

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(tmap: PiecewiseLinearMap, x):
    """Evaluate ``tmap`` at scalar or array ``x`` in [-1, 1].

    At a shared branch endpoint the left branch is used (except at -1);
    interior boundary points are fixed.
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs < -1.0) or np.any(xs > 1.0) or np.any(np.isnan(xs)):
        raise MapError("x must lie in [-1, 1]")
    his = np.array([b.hi for b in tmap.branches])
    idx = np.minimum(np.searchsorted(his, xs, side="left"), len(his) - 1)
    slopes = np.array([b.slope for b in tmap.branches])
    icpts = np.array([b.intercept for b in tmap.branches])
    out = slopes[idx] * xs + icpts[idx]
    for p in tmap.boundary_points[1:-1]:
        out = np.where(xs == p, p, out)
    return float(out) if np.ndim(out) == 0 else out


def paired_tent(a: float, b: float) -> PiecewiseLinearMap:
    """Paired tent map with leak ``b`` from I_L = [-1, 0] and ``a`` from I_R = [0, 1]."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise MapError(f"paired tent parameters must lie in [0, 1], got a={a}, b={b}")
    sb, sa = 2.0 * (1.0 + b), 2.0 * (1.0 + a)
    return PiecewiseLinearMap(
        branches=(
            Branch(-1.0, -0.5, sb, sb - 1.0),  # 2(1+b)(x+1) - 1
            Branch(-0.5, 0.0, -sb, -1.0),      # -2(1+b)x - 1
            Branch(0.0, 0.5, -sa, 1.0),        # -2(1+a)x + 1
            Branch(0.5, 1.0, sa, 1.0 - sa),    # 2(1+a)(x-1) + 1
        ),
        boundary_points=(-1.0, 0.0, 1.0),
    )


def chain_tent(m: int, leak_table) -> PiecewiseLinearMap:
    """Chain of ``m`` tent blocks on equal intervals with neighbor leakage.

    Row ``i`` of ``leak_table`` is ``(left, right)``: block ``i`` overshoots
    into block ``i-1`` by ``left`` and into block ``i+1`` by ``right`` times
    the block width. Even-indexed blocks are upward tents (peak overshoots
    right, endpoints undershoot left), odd-indexed blocks are inverted. The
    normalized hole masses are ``left/(1+left+right)`` and
    ``right/(1+left+right)``; ``m = 2`` reproduces :func:`paired_tent`.
    """
    if m < 2:
        raise MapError("chain_tent needs m >= 2")
    table = np.asarray(leak_table, dtype=float)
    if table.shape != (m, 2):
        raise MapError(f"leak_table must have shape ({m}, 2), got {table.shape}")
    if np.any(table < 0) or np.any(table > 1):
        raise MapError("leak parameters must lie in [0, 1]")
    if table[0, 0] != 0 or table[-1, 1] != 0:
        raise MapError("no leak allowed past the outer boundary of the chain")
    w = 2.0 / m
    bps = [-1.0 + 2.0 * i / m for i in range(m)] + [1.0]
    branches = []
    for i in range(m):
        lo, hi = bps[i], bps[i + 1]
        c = 0.5 * (lo + hi)
        left, right = float(table[i, 0]), float(table[i, 1])
        s = 2.0 * (1.0 + left + right)
        bottom = lo - w * left
        top = hi + w * right
        if i % 2 == 0:
            branches.append(Branch(lo, c, s, bottom - s * lo))
            branches.append(Branch(c, hi, -s, bottom + s * hi))
        else:
            branches.append(Branch(lo, c, -s, top + s * lo))
            branches.append(Branch(c, hi, s, top - s * hi))
    return PiecewiseLinearMap(branches=tuple(branches), boundary_points=tuple(bps))


@dataclass(frozen=True)
class HoleSet:
    """Holes ``H_{i,j}``: closed intervals of ``I_i`` mapped into ``I_j``."""

    intervals: tuple[tuple[float, float], ...]
    holes: dict

    def of_source(self, i: int) -> list[tuple[float, float]]:
        out = []
        for (src, _), ivs in sorted(self.holes.items()):
            if src == i:
                out.extend(ivs)
        return sorted(out)

    def between(self, i: int, j: int) -> list[tuple[float, float]]:
        return list(self.holes.get((i, j), ()))


def _merge(pieces: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for x0, x1 in sorted(pieces):
        if out and x0 <= out[-1][1]:
            out[-1][1] = max(out[-1][1], x1)
        else:
            out.append([x0, x1])
    return [(a, b) for a, b in out]


def _source_index(tmap: PiecewiseLinearMap, source) -> int:
    if source in ("L", "R"):
        if tmap.m != 2:
            raise MapError("'L'/'R' labels need m = 2")
        return 0 if source == "L" else 1
    return int(source)


def holes(tmap: PiecewiseLinearMap) -> HoleSet:
    """Exact holes by affine inversion of every branch.

    For each branch lying in ``I_i`` and each other interval ``I_j`` the
    closed preimage of ``I_j`` is taken. Zero-length pieces located at
    boundary points are dropped, so at zero leakage only the infinitesimal
    holes ``T^{-1}(B) \\ B`` remain.
    """
    ivs = tmap.intervals
    bset = set(tmap.boundary_points)
    raw: dict[tuple[int, int], list] = {}
    for br in tmap.branches:
        i = tmap.interval_of(0.5 * (br.lo + br.hi))
        for j, (t0, t1) in enumerate(ivs):
            if j == i:
                continue
            pre = br.preimage(t0, t1)
            if pre is None:
                continue
            if pre[0] == pre[1] and pre[0] in bset:
                continue
            raw.setdefault((i, j), []).append(pre)
    merged = {key: tuple(_merge(p)) for key, p in raw.items()}
    return HoleSet(intervals=tuple(ivs), holes=merged)


def hole_measure(tmap: PiecewiseLinearMap, source, target=None) -> float:
    """Mass of the holes of ``source`` under normalized Lebesgue on that interval.

    For the paired tent map ``|I_L| = |I_R| = 1`` so this is plain Lebesgue.
    ``target`` restricts to holes into one destination interval.
    """
    i = _source_index(tmap, source)
    hs = holes(tmap)
    if target is None:
        pieces = hs.of_source(i)
    else:
        pieces = hs.between(i, _source_index(tmap, target))
    lo, hi = tmap.intervals[i]
    return sum(x1 - x0 for x0, x1 in pieces) / (hi - lo)


def tent_hole_closed_form(a: float, b: float):
    """Closed-form holes ``(H_L, H_R)`` of :func:`paired_tent`."""
    sb, sa = 2.0 * (1.0 + b), 2.0 * (1.0 + a)
    return (-1.0 + 1.0 / sb, -1.0 / sb), (1.0 / sa, 1.0 - 1.0 / sa)
