import subprocess
import sys
import textwrap

import pytest

from metacocycle.cli import main
from metacocycle.config import ConfigError, parse_config

SYMMETRIC = """
seed = 0
eps_list = [0.1, 0.05, 0.025, 0.0125, 0.005, 0.002, 0.001]
fibers = [0, 17]
[driving]
kind = "rotation"
arcs = [[0.0, [1.0, 1.0]]]
[map]
family = "paired_tent"
"""

SMALL = """
seed = 0
eps_list = [0.2, 0.1, 0.0]
fibers = [0, 5]
[grid]
min = 256
[driving]
kind = "rotation"
arcs = [[0.0, [0.8, 0.3]], [0.5, [0.4, 0.5]]]
[markov]
n = 2000
tol = 0.05
[ly]
trials = 20
sequences = 4
[pi]
chains = 9
"""


def run_cli(tmp_path, cmd, text, name="cfg.toml", extra=()):
    cfg = tmp_path / name
    cfg.write_text(textwrap.dedent(text))
    out = tmp_path / "out"
    code = main([cmd, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_symmetric_phi_and_psi(tmp_path):
    code, out = run_cli(tmp_path, "phi-converge", SYMMETRIC)
    assert code == 0
    lines = (out / "phi_converge.csv").read_text().splitlines()
    assert lines[0] == "epsilon,fiber,grid_n,horizon,l1_phi_dist,l1_psi_dist,lambda2,flags"
    assert lines[-2].startswith("# config_sha256=")
    assert lines[-1].startswith("# summary: status=pass")
    final = [float(l.split(",")[4]) for l in lines[1:-2] if l.startswith("0.001,")]
    assert max(final) <= 0.02
    code, out = run_cli(tmp_path, "psi-converge", SYMMETRIC)
    assert code == 0
    code, out = run_cli(tmp_path, "lambda2", SYMMETRIC)
    assert code == 0


def test_lambda2_with_baseline(tmp_path):
    code, out = run_cli(tmp_path, "lambda2", SMALL)
    assert code == 0
    text = (out / "lambda2.csv").read_text()
    assert "max_abs_lambda2_eps0=0" in text


def test_byte_identical_outputs(tmp_path):
    run_cli(tmp_path, "lambda2", SMALL, extra=["--threads", "1"])
    first = (tmp_path / "out" / "lambda2.csv").read_bytes()
    run_cli(tmp_path, "lambda2", SMALL, extra=["--threads", "3"])
    assert (tmp_path / "out" / "lambda2.csv").read_bytes() == first


@pytest.mark.parametrize("cmd,fname", [("markov", "markov.csv"), ("ly-check", "ly_check.csv"), ("pi-check", "pi_check.csv")])
def test_check_commands(tmp_path, cmd, fname):
    code, out = run_cli(tmp_path, cmd, SMALL)
    assert code == 0
    lines = (out / fname).read_text().splitlines()
    assert lines[-1].startswith("# summary: status=pass")
    assert lines[-2].startswith("# config_sha256=")


def test_markov_symmetric_three_state(tmp_path, capsys):
    cfg = """
    eps_list = [0.1]
    fibers = [0, 3]
    [driving]
    arcs = [[0.0, [0.0, 1.0, 1.0, 1.0, 1.0, 0.0]]]
    [map]
    family = "chain_tent"
    m = 3
    """
    code, out = run_cli(tmp_path, "markov", cfg)
    assert code == 0
    assert "v0 = (0.333333333333, 0.333333333333, 0.333333333333)" in capsys.readouterr().out
    assert "# v0=0.333333333333, 0.333333333333, 0.333333333333" in (out / "markov.csv").read_text()


def test_b_zero_baseline(tmp_path):
    cfg = SMALL.replace("[[0.0, [0.8, 0.3]], [0.5, [0.4, 0.5]]]", "[[0.0, [0.8, 0.0]], [0.5, [0.4, 0.0]]]")
    parsed = parse_config(cfg)
    from metacocycle.oseledets import theoretical_phi0
    from metacocycle.transfer import Density

    phi0 = theoretical_phi0(parsed.driving, 64)
    assert (phi0 - Density.indicator(64, -1, 0)).l1_norm() == 0.0
    code, out = run_cli(tmp_path, "phi-converge", cfg)
    assert code in (0, 1)
    assert (out / "phi_converge.csv").exists()


def test_failure_exit_code(tmp_path, capsys):
    # default thresholds are not met at eps = 0.1 on this driving
    code, out = run_cli(tmp_path, "phi-converge", SMALL.replace("[0.2, 0.1, 0.0]", "[0.2, 0.1]"))
    assert code == 1
    assert "FAIL" in capsys.readouterr().err
    assert (out / "phi_converge.csv").read_text().splitlines()[-1].startswith("# summary: status=fail")


def test_sign_flag_fails(monkeypatch, tmp_path):
    import metacocycle.cli as cli

    real = cli._sweep

    def flagged(cfg, threads):
        rows = real(cfg, threads)
        rows[0].flags.append("sign_undetermined")
        return rows

    monkeypatch.setattr(cli, "_sweep", flagged)
    code, _ = run_cli(tmp_path, "psi-converge", SYMMETRIC.replace("0.005, 0.002, 0.001", "0.005"))
    assert code == 1


@pytest.mark.parametrize(
    "bad",
    [
        SMALL.replace("[0.2, 0.1, 0.0]", "[0.1, 0.2]"),
        SMALL.replace("[0.2, 0.1, 0.0]", "[0.2, -0.1]"),
        SMALL.replace("[0.2, 0.1, 0.0]", "[0.2, 0.0, 0.0]"),
        SMALL.replace("min = 256", 'min = 256\ntable = { "0.1" = 257 }'),
        SMALL.replace("min = 256", 'min = 256\ntable = { "0.1" = 100 }'),
        SMALL.replace('kind = "rotation"', 'kind = "lorenz"'),
        SMALL.replace("[0.4, 0.5]]", "[0.4]]"),
        SMALL + "\n[map]\nfamily = \"baker\"\n",
        "eps_list = [0.1,\n",
        'eps_list = ["x"]',
    ],
)
def test_config_errors_exit_2(tmp_path, bad, capsys):
    code, _ = run_cli(tmp_path, "phi-converge", bad)
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_parse_error_has_position():
    with pytest.raises(ConfigError, match="line"):
        parse_config("eps_list = [0.1,\nfoo = ")


def test_missing_config_file(tmp_path):
    assert main(["markov", "--config", str(tmp_path / "nope.toml")]) == 2


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL)
    res = subprocess.run(
        [sys.executable, "-m", "metacocycle.cli", "pi-check", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "status=pass" in res.stdout
