"""Experiment configuration: TOML files validated into plain dataclasses."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .driving import DrivingError, DrivingSystem, build_rotation_driving, build_shift_driving, golden_angle
from .oseledets import FAMILIES, default_grid_rule


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    driving: DrivingSystem
    family: str
    m: int
    eps_list: list[float]
    grid_min: int
    grid_factor: float
    grid_table: dict[float, int]
    horizon_initial: int
    horizon_cap: int
    renorm_every: int
    fibers: list[int]
    out: str
    seed: int
    acceptance: dict
    markov: dict
    ly: dict
    pi: dict
    sha256: str
    raw: dict = field(repr=False, default_factory=dict)

    def grid_rule(self, eps: float) -> int:
        for key, n in self.grid_table.items():
            if math.isclose(key, eps, rel_tol=0, abs_tol=1e-15):
                return n
        return default_grid_rule(eps, self.grid_min, self.grid_factor)


ACCEPTANCE_DEFAULTS = {"phi_final_max": 0.03, "psi_final_max": 0.05, "slack": 0.10}
MARKOV_DEFAULTS = {"eps_list": [0.1, 0.01], "n": 10_000, "tol": 5e-3, "residual_max": 1e-12}
LY_DEFAULTS = {"trials": 200, "sequences": 20, "horizons": [2, 4, 8], "grid_n": 256}
PI_DEFAULTS = {"chains": 100, "eps_list": [0.1, 0.01], "tail_tol": 1e-12, "gap_max": 1e-10, "product_tol": 1e-12, "product_n": 1000}


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _build_driving(d: dict) -> DrivingSystem:
    kind = d.get("kind", "rotation")
    try:
        if kind == "rotation":
            angle = d.get("angle", "golden")
            angle = golden_angle() if angle == "golden" else _num(angle, "driving.angle")
            arcs = d.get("arcs")
            if not arcs:
                raise ConfigError("driving.arcs is required for a rotation")
            arcs = [(_num(s, "driving.arcs start"), [_num(x, "driving.arcs value") for x in v]) for s, v in arcs]
            return build_rotation_driving(angle, arcs, d.get("omega0", 0))
        if kind == "two_sided_shift":
            probs = [_num(p, "driving.probs") for p in d["probs"]]
            values = d["values"]
            if len(values) != len(probs):
                raise ConfigError("driving.values and driving.probs differ in length")
            return build_shift_driving(list(zip(values, probs)), int(d.get("seed", 0)), int(d["window_radius"]))
    except KeyError as exc:
        raise ConfigError(f"driving: missing key {exc}") from exc
    except DrivingError as exc:
        raise ConfigError(f"driving: {exc}") from exc
    raise ConfigError(f"driving.kind must be 'rotation' or 'two_sided_shift', got {kind!r}")


def _fibers(spec) -> list[int]:
    if isinstance(spec, list):
        return [int(k) for k in spec]
    if isinstance(spec, dict):
        start, count, stride = int(spec.get("start", 0)), int(spec.get("count", 10)), int(spec.get("stride", 101))
        return [start + i * stride for i in range(count)]
    raise ConfigError("fibers must be a list of integers or a {start, count, stride} table")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    eps_list = [_num(e, "eps_list") for e in raw.get("eps_list", [])]
    if not eps_list:
        raise ConfigError("eps_list must be non-empty")
    body = eps_list[:-1] if eps_list[-1] == 0 and len(eps_list) > 1 else eps_list
    if any(e <= 0 for e in body):
        raise ConfigError("eps_list entries must be positive (a single trailing 0 is allowed)")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")

    mp = raw.get("map", {})
    family = mp.get("family", "paired_tent")
    if family not in FAMILIES:
        raise ConfigError(f"map.family must be one of {FAMILIES}, got {family!r}")
    m = int(mp.get("m", 2))
    if family == "paired_tent" and m != 2:
        raise ConfigError("paired_tent has m = 2")

    driving = _build_driving(raw.get("driving", {}))
    need = 2 if family == "paired_tent" else 2 * m
    if driving.dim != need:
        raise ConfigError(f"driving value vectors must have length {need} for {family}")

    grid = raw.get("grid", {})
    table = {float(k): int(v) for k, v in grid.get("table", {}).items()}
    cfg_hash = hashlib.sha256(text.encode()).hexdigest()
    hz = raw.get("horizon", {})
    cfg = ExperimentConfig(
        driving=driving,
        family=family,
        m=m,
        eps_list=eps_list,
        grid_min=int(grid.get("min", 1024)),
        grid_factor=_num(grid.get("factor", 16.0), "grid.factor"),
        grid_table=table,
        horizon_initial=int(hz.get("initial", 256)),
        horizon_cap=int(hz.get("cap", 1 << 16)),
        renorm_every=int(hz.get("renorm_every", 1)),
        fibers=_fibers(raw.get("fibers", {"count": 10})),
        out=str(raw.get("out", "out")),
        seed=int(raw.get("seed", 0)),
        acceptance={**ACCEPTANCE_DEFAULTS, **raw.get("acceptance", {})},
        markov={**MARKOV_DEFAULTS, **raw.get("markov", {})},
        ly={**LY_DEFAULTS, **raw.get("ly", {})},
        pi={**PI_DEFAULTS, **raw.get("pi", {})},
        sha256=cfg_hash,
        raw=raw,
    )
    for eps in eps_list:
        n = cfg.grid_rule(eps)
        if n % 2:
            raise ConfigError(f"grid_n={n} for eps={eps} must be even")
        if eps > 0 and n < 16.0 / eps:
            raise ConfigError(f"grid_n={n} for eps={eps} does not resolve the holes (need >= {16.0 / eps:g})")
    if cfg.horizon_initial % cfg.renorm_every:
        raise ConfigError("horizon.renorm_every must divide horizon.initial")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))
