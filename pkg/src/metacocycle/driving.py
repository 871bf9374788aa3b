"""Invertible ergodic base systems with finite-range fiber observables.

Two bases are provided: an irrational circle rotation with a piecewise-constant
observable on arcs, and a two-sided Bernoulli shift materialized on a fixed
symbol window. Both expose the same "atom" view: a finite table of value
vectors, their probabilities, and a label lookup ``k -> atom index`` for the
orbit point ``sigma^k omega``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

# F_45 / F_46: golden-mean surrogate with period F_46 ~ 1.8e9.
GOLDEN_NUM = 1134903170
GOLDEN_DEN = 1836311903
MAX_DENOMINATOR = GOLDEN_DEN


class DrivingError(ValueError):
    """Malformed driving-system specification."""


class WindowError(IndexError):
    """Query outside the materialized symbol window of a shift."""


def golden_angle() -> Fraction:
    return Fraction(GOLDEN_NUM, GOLDEN_DEN)


def _as_fraction(x, max_den: int = MAX_DENOMINATOR) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(str(x)).limit_denominator(max_den)


@dataclass(frozen=True, eq=False)
class DrivingSystem:
    """Base transformation with a finite-range vector observable.

    Attributes
    ----------
    kind : str
        ``"rotation"`` or ``"two_sided_shift"``.
    values : ndarray, shape (n_atoms, dim)
        Value vector attached to each atom (arc or symbol).
    probs : ndarray, shape (n_atoms,)
        Measure of each atom (arc length or symbol probability).
    """

    kind: str
    values: np.ndarray
    probs: np.ndarray
    # rotation
    angle: Fraction | None = None
    omega0: Fraction = Fraction(0)
    arc_starts: np.ndarray | None = None
    # shift
    seed: int | None = None
    window_radius: int | None = None
    symbols: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.values.shape[0]

    def orbit_point(self, k):
        """Circle coordinate of ``sigma^k omega0`` (rotation only), exact mod 1."""
        if self.kind != "rotation":
            raise DrivingError("orbit_point is defined for rotations only")
        q = self.angle.denominator
        # shared denominator: omega0 = r/q, angle = p/q
        p = self.angle.numerator
        r = (self.omega0 * q)
        if r.denominator != 1:
            raise DrivingError("omega0 must share the angle denominator")
        r = int(r)
        ks = np.asarray(k, dtype=np.int64)
        num = (r + np.mod(ks, q) * p) % q
        return num / q

    def labels(self, k) -> np.ndarray:
        """Atom index of the fiber ``sigma^k omega`` for scalar or array ``k``."""
        ks = np.asarray(k, dtype=np.int64)
        if self.kind == "rotation":
            pts = self.orbit_point(ks)
            return np.searchsorted(self.arc_starts, pts, side="right") - 1
        w = self.window_radius
        if np.any(np.abs(ks) > w):
            bad = ks.flat[np.argmax(np.abs(ks).ravel())]
            raise WindowError(f"index {int(bad)} outside window [-{w}, {w}]")
        return self.symbols[ks + w]

    def fiber_params(self, k: int) -> np.ndarray:
        return self.values[int(self.labels(k))].copy()

    def average_observable(self, component: int) -> float:
        """Exact P-average of one observable component."""
        if not 0 <= component < self.dim:
            raise IndexError(f"component {component} out of range for dim {self.dim}")
        return float(self.probs @ self.values[:, component])

    def average(self) -> np.ndarray:
        return self.probs @ self.values

    def birkhoff_average(self, component: int, n: int, start: int = 0) -> float:
        total = 0.0
        chunk = 1 << 16
        for s in range(start, start + n, chunk):
            ks = np.arange(s, min(s + chunk, start + n))
            total += self.values[self.labels(ks), component].sum()
        return total / n

    def atoms(self):
        """Iterate ``(probability, value_vector)`` over the finite range."""
        return zip(self.probs.tolist(), [v.copy() for v in self.values])

    def check_window(self, lo: int, hi: int) -> None:
        """Raise if indices ``lo..hi`` are not all available."""
        if self.kind == "two_sided_shift":
            w = self.window_radius
            if lo < -w or hi > w:
                raise WindowError(f"range [{lo}, {hi}] exceeds window [-{w}, {w}]")


def _check_values(vals: Sequence[Sequence[float]]) -> np.ndarray:
    try:
        arr = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for v in vals])
    except ValueError as exc:
        raise DrivingError("value vectors must all have the same length") from exc
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DrivingError("need at least one value vector")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DrivingError("value vectors must lie componentwise in [0, 1]")
    return arr


def build_rotation_driving(angle, arcs, omega0=0) -> DrivingSystem:
    """Circle rotation ``x -> x + angle mod 1`` with an observable constant on arcs.

    ``angle`` is converted to a rational with denominator at most ``F_46``; a
    float close to the golden mean becomes ``F_45 / F_46``. ``arcs`` is a list
    of ``(start, value_vector)`` with starts strictly increasing from 0.
    """
    ang = _as_fraction(angle)
    if not 0 < ang < 1:
        raise DrivingError(f"rotation angle must lie in (0, 1), got {angle}")
    starts = [float(s) for s, _ in arcs]
    if not starts or starts[0] != 0.0:
        raise DrivingError("first arc must start at 0")
    if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= 1.0:
        raise DrivingError("arc starts must be strictly increasing in [0, 1)")
    values = _check_values([v for _, v in arcs])
    edges = np.array(starts + [1.0])
    om = _as_fraction(omega0)
    om = Fraction(round(om * ang.denominator) % ang.denominator, ang.denominator)
    return DrivingSystem(
        kind="rotation",
        values=values,
        probs=np.diff(edges),
        angle=ang,
        omega0=om,
        arc_starts=np.array(starts),
    )


def build_shift_driving(alphabet, seed: int, window_radius: int) -> DrivingSystem:
    """Two-sided Bernoulli shift on a materialized window.

    ``alphabet`` is a list of ``(value_vector, probability)`` pairs. Symbols
    for indices ``-window_radius..window_radius`` are drawn once from ``seed``.
    """
    if window_radius < 1:
        raise DrivingError("window_radius must be >= 1")
    probs = np.array([float(p) for _, p in alphabet])
    if probs.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise DrivingError("symbol probabilities must be nonnegative and sum to 1")
    values = _check_values([v for v, _ in alphabet])
    rng = np.random.default_rng(seed)
    symbols = rng.choice(len(probs), size=2 * window_radius + 1, p=probs / probs.sum())
    symbols.setflags(write=False)
    return DrivingSystem(
        kind="two_sided_shift",
        values=values,
        probs=probs,
        seed=int(seed),
        window_radius=int(window_radius),
        symbols=symbols,
    )


def constant_driving(value) -> DrivingSystem:
    """Single-atom base: every fiber carries ``value``."""
    return build_rotation_driving(golden_angle(), [(0.0, value)])


def fiber_params(ds: DrivingSystem, k: int) -> np.ndarray:
    return ds.fiber_params(k)


def average_observable(ds: DrivingSystem, component: int) -> float:
    return ds.average_observable(component)
