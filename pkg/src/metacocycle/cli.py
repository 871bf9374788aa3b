"""Command-line front end: config-driven experiments writing plot-ready CSV.

Every CSV has a header row, data rows, a ``# config_sha256=...`` footer and,
as its last row, a machine-readable ``# summary`` line. Exit codes: 0 pass,
1 acceptance failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .driving import build_rotation_driving, build_shift_driving, constant_driving, golden_angle
from .maps import paired_tent
from .markov import (
    EnvChain,
    backward_product,
    backward_product_closed_form,
    chain_limit,
    chain_limit_check,
    format_v0,
    p_recursion,
    pi_series,
)
from .oseledets import SweepRow, convergence_sweep, monotone_violations
from .transfer import verify_ly

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class Outcome:
    """Pass/fail bookkeeping for one command."""

    def __init__(self):
        self.failures: list[str] = []
        self.metrics: list[tuple[str, str]] = []

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.failures.append(message)

    def metric(self, key: str, value) -> None:
        self.metrics.append((key, f"{value:.6g}" if isinstance(value, float) else str(value)))

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        parts = [f"status={'pass' if self.passed else 'fail'}"] + [f"{k}={v}" for k, v in self.metrics]
        return "# summary: " + "; ".join(parts)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence[str]], cfg: ExperimentConfig, outcome: Outcome,
              extra: Sequence[str] = ()) -> None:
    lines = [",".join(columns)]
    lines += [",".join(r) for r in rows]
    lines += list(extra)
    lines.append(f"# config_sha256={cfg.sha256}")
    lines.append(outcome.summary())
    path.write_text("\n".join(lines) + "\n")


# -- sweep commands -----------------------------------------------------------

def _sweep(cfg: ExperimentConfig, threads: int) -> list[SweepRow]:
    return convergence_sweep(
        cfg.driving,
        cfg.family,
        cfg.eps_list,
        grid_rule=cfg.grid_rule,
        fibers=cfg.fibers,
        m=cfg.m,
        horizon_N=cfg.horizon_initial,
        renorm_every=cfg.renorm_every,
        threads=threads,
    )


def _final_rows(rows: Sequence[SweepRow]) -> list[SweepRow]:
    pos = [r.epsilon for r in rows if r.epsilon > 0]
    return [r for r in rows if pos and r.epsilon == min(pos)]


def assess_phi(rows: Sequence[SweepRow], acc: dict) -> Outcome:
    out = Outcome()
    final = _final_rows(rows)
    worst = max((r.l1_phi_dist for r in final), default=0.0)
    viol = monotone_violations(rows, "l1_phi_dist", acc["slack"])
    out.metric("final_max_phi_dist", worst)
    out.metric("monotone_violations", len(viol))
    out.check(worst <= acc["phi_final_max"], f"final-eps phi distance {worst:.4g} > {acc['phi_final_max']}")
    out.check(not viol, f"phi distance not monotone: {viol[:3]}")
    bad = [r.fiber for r in rows if "phi_not_converged" in r.flags]
    out.check(not bad, f"pullback did not converge on fibers {sorted(set(bad))}")
    return out


def assess_psi(rows: Sequence[SweepRow], acc: dict) -> Outcome:
    out = Outcome()
    final = _final_rows(rows)
    worst = max((r.l1_psi_dist for r in final), default=0.0)
    drift = max((abs(r.psi_integral) for r in rows if r.epsilon > 0), default=0.0)
    out.metric("final_max_psi_dist", worst)
    out.metric("max_abs_psi_integral", drift)
    out.check(worst <= acc["psi_final_max"], f"final-eps psi distance {worst:.4g} > {acc['psi_final_max']}")
    out.check(drift <= 1e-10, f"psi integral {drift:.3g} exceeds 1e-10")
    flagged = sorted({r.fiber for r in rows if "sign_undetermined" in r.flags})
    out.check(not flagged, f"sign flag raised on fibers {flagged}")
    neg = sorted({r.fiber for r in rows if r.epsilon > 0 and r.psi_left_mass <= 0})
    out.check(not neg, f"psi has nonpositive I_L mass on fibers {neg}")
    bad = [r.fiber for r in rows if "psi_not_converged" in r.flags]
    out.check(not bad, f"second function did not converge on fibers {sorted(set(bad))}")
    return out


def assess_lambda2(rows: Sequence[SweepRow], acc: dict) -> Outcome:
    out = Outcome()
    l1 = max((abs(r.lambda1) for r in rows), default=0.0)
    out.metric("max_abs_lambda1", l1)
    out.check(l1 <= 1e-10, f"|lambda1| = {l1:.3g} > 1e-10")
    pos = [r for r in rows if r.epsilon > 0]
    nonneg = [(r.epsilon, r.fiber) for r in pos if not r.lambda2 < 0]
    out.check(not nonneg, f"lambda2 >= 0 at (eps, fiber) {nonneg[:5]}")
    for k in sorted({r.fiber for r in pos}):
        seq = sorted((r for r in pos if r.fiber == k), key=lambda r: -r.epsilon)
        mags = [abs(r.lambda2) for r in seq]
        if any(b >= a for a, b in zip(mags, mags[1:])):
            out.failures.append(f"|lambda2| not decreasing on fiber {k}: {mags}")
    zero = [abs(r.lambda2) for r in rows if r.epsilon == 0]
    if zero:
        out.metric("max_abs_lambda2_eps0", max(zero))
        out.check(max(zero) <= 1e-8, f"lambda2 at eps=0 is {max(zero):.3g}, not 0")
    return out


def _sweep_command(name: str, assess: Callable) -> Callable:
    def run(cfg: ExperimentConfig, out_dir: Path, threads: int) -> Outcome:
        rows = _sweep(cfg, threads)
        outcome = assess(rows, cfg.acceptance)
        write_csv(out_dir / f"{name}.csv", SweepRow.CSV_COLUMNS, [r.csv_fields() for r in rows], cfg, outcome)
        return outcome
    return run


# -- markov / ly / pi -----------------------------------------------------------

def _chain_from_config(cfg: ExperimentConfig, eps: float) -> EnvChain:
    source = cfg.markov.get("source", "leak" if cfg.family == "chain_tent" else "tent")
    if source == "tent":
        return EnvChain.from_tent_driving(cfg.driving, eps)
    if source == "leak":
        return EnvChain.from_leak_driving(cfg.driving, cfg.m, eps)
    if source == "beta":
        return EnvChain.two_state(cfg.driving, eps)
    raise ConfigError(f"markov.source must be 'tent', 'leak' or 'beta', got {source!r}")


def cmd_markov(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> Outcome:
    eps_list = [float(e) for e in cfg.markov["eps_list"]]
    n, tol = int(cfg.markov["n"]), float(cfg.markov["tol"])
    chain = _chain_from_config(cfg, eps_list[0])
    lim = chain_limit(chain)
    rows = chain_limit_check(chain, eps_list, n, cfg.fibers)
    outcome = Outcome()
    final = [r for r in rows if r.epsilon == min(eps_list)]
    worst = max(r.max_dist_to_v0 for r in final)
    outcome.metric("v0", format_v0(lim.v0).replace(", ", " "))
    outcome.metric("residual", lim.residual())
    outcome.metric("final_max_dist", worst)
    outcome.check(lim.residual() <= float(cfg.markov["residual_max"]), f"v0 residual {lim.residual():.3g}")
    outcome.check(worst <= tol, f"backward products {worst:.4g} from v0 at eps={min(eps_list)} (tol {tol})")
    print(f"v0 = ({format_v0(lim.v0)})")
    write_csv(out_dir / "markov.csv", rows[0].CSV_COLUMNS, [r.csv_fields() for r in rows], cfg, outcome,
              extra=[f"# v0={format_v0(lim.v0)}"])
    return outcome


def random_tent_sequence(rng: np.random.Generator, length: int):
    """Paired tent maps with independent uniform parameters in [0, 1]."""
    return [paired_tent(float(a), float(b)) for a, b in rng.uniform(0.0, 1.0, size=(length, 2))]


def cmd_ly_check(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> Outcome:
    ly = cfg.ly
    trials, sequences = int(ly["trials"]), int(ly["sequences"])
    horizons = [int(h) for h in ly["horizons"]]
    rng = np.random.default_rng(cfg.seed)
    per_seq = [trials // sequences + (1 if s < trials % sequences else 0) for s in range(sequences)]
    rows, total_viol, total_checks = [], 0, 0
    for s, count in enumerate(per_seq):
        seq = random_tent_sequence(rng, max(horizons))
        rep = verify_ly(seq, count, int(ly["grid_n"]), horizons, seed=int(rng.integers(2**31)))
        total_viol += rep.violations
        total_checks += rep.checks
        rows.append([str(s), str(count), str(rep.checks), str(rep.violations), f"{rep.max_ratio:.12e}", f"{rep.min_slack:.12e}"])
    outcome = Outcome()
    outcome.metric("densities", trials)
    outcome.metric("checks", total_checks)
    outcome.metric("violations", total_viol)
    outcome.check(total_viol == 0, f"{total_viol} Lasota-Yorke violations")
    write_csv(out_dir / "ly_check.csv", ("sequence", "densities", "checks", "violations", "max_ratio", "min_slack"),
              rows, cfg, outcome)
    return outcome


def random_two_state_chain(rng: np.random.Generator, index: int, epsilon: float) -> tuple[str, EnvChain]:
    """Alternating constant, rotation-driven and shift-driven two-state chains."""
    kind = ("constant", "rotation", "shift")[index % 3]
    if kind == "constant":
        ds = constant_driving(rng.uniform(0.05, 1.0, size=2).tolist())
    elif kind == "rotation":
        k = int(rng.integers(2, 5))
        starts = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, size=k - 1))])
        ds = build_rotation_driving(golden_angle(), [(float(s), rng.uniform(0.0, 1.0, 2).tolist()) for s in starts])
    else:
        k = int(rng.integers(2, 4))
        probs = rng.dirichlet(np.ones(k))
        values = rng.uniform(0.0, 1.0, size=(k, 2))
        values[0] = rng.uniform(0.3, 1.0, size=2)  # keeps the averaged exit rate away from 0
        ds = build_shift_driving(list(zip(values.tolist(), probs.tolist())), int(rng.integers(2**31)), 20_000)
    return kind, EnvChain.two_state(ds, epsilon)


def cmd_pi_check(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> Outcome:
    pi = cfg.pi
    rng = np.random.default_rng(cfg.seed)
    eps_list = [float(e) for e in pi["eps_list"]]
    tail_tol, gap_max = float(pi["tail_tol"]), float(pi["gap_max"])
    prod_n, prod_tol = int(pi["product_n"]), float(pi["product_tol"])
    rows, worst_gap, worst_prod, over_bound = [], 0.0, 0.0, 0
    for c in range(int(pi["chains"])):
        kind, base = random_two_state_chain(rng, c, eps_list[0])
        k = int(rng.integers(-1000, 1000))
        for eps in eps_list:
            chain = base.with_epsilon(eps)
            value, terms, tail = pi_series(chain, k, tail_tol=tail_tol)
            rec = p_recursion(chain, k, terms, float(rng.uniform()))
            gap = abs(value - rec)
            # both sides agree up to the certified tail plus roundoff
            if gap > tail + 1e-13:
                over_bound += 1
            pgap = 0.0
            for n in sorted({1, 10, 100, prod_n}):
                pgap = max(pgap, float(np.abs(backward_product(chain, k, n) - backward_product_closed_form(chain, k, n)).max()))
            worst_gap, worst_prod = max(worst_gap, gap), max(worst_prod, pgap)
            rows.append([str(c), kind, f"{eps:.12g}", str(k), f"{value:.15e}", f"{rec:.15e}", f"{gap:.3e}",
                         f"{tail:.3e}", str(terms), f"{pgap:.3e}"])
    outcome = Outcome()
    outcome.metric("max_pi_gap", worst_gap)
    outcome.metric("max_product_gap", worst_prod)
    outcome.metric("gaps_over_tail_bound", over_bound)
    outcome.check(worst_gap <= gap_max, f"series vs recursion gap {worst_gap:.3g} > {gap_max}")
    outcome.check(over_bound == 0, f"{over_bound} gaps exceed the certified tail bound")
    outcome.check(worst_prod <= prod_tol, f"backward product vs closed form {worst_prod:.3g} > {prod_tol}")
    write_csv(out_dir / "pi_check.csv",
              ("chain", "kind", "epsilon", "fiber", "pi_series", "p_recursion", "gap", "tail_bound", "terms", "product_gap"),
              rows, cfg, outcome)
    return outcome


COMMANDS = {
    "phi-converge": _sweep_command("phi_converge", assess_phi),
    "psi-converge": _sweep_command("psi_converge", assess_psi),
    "lambda2": _sweep_command("lambda2", assess_lambda2),
    "markov": cmd_markov,
    "ly-check": cmd_ly_check,
    "pi-check": cmd_pi_check,
}

cmd_phi_converge = COMMANDS["phi-converge"]
cmd_psi_converge = COMMANDS["psi-converge"]
cmd_lambda2 = COMMANDS["lambda2"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metacocycle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep cells")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = Path(args.out if args.out is not None else cfg.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc
        outcome = COMMANDS[args.command](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(outcome.summary())
    for msg in outcome.failures:
        print(f"FAIL: {msg}", file=sys.stderr)
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
