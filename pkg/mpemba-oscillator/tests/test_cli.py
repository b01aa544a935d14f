"""Command-line tests: subcommands, output files and exit codes."""
from __future__ import annotations

import json
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cli import main
from commands.spectrum import spectrum_command
from utils.model import make_bath

APP_ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.parametrize("n_th", ["1", "2", "2.5"])
def test_spectrum_matches_analytic_eigenvalues(tmp_path: Path, n_th: str) -> None:
    out = tmp_path / "spectrum.csv"
    assert main(["spectrum", "--n-th", n_th, "--alpha-max", "10", "--s-max", "6", "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert len(table) == 11 * 7
    population = table[table["s"] == 0]
    scale = np.maximum(np.abs(population["analytic_re"]), 1.0)
    assert np.all(population["abs_deviation"] / scale < 1e-8)
    coherence = table[(table["s"] > 0) & (table["alpha"] <= 5)]
    assert np.all(np.abs(coherence["numeric_re"] - coherence["analytic_re"]) < 1e-6)
    assert np.allclose(coherence["numeric_im"], coherence["analytic_im"])


def test_spectrum_coherence_row(tmp_path: Path) -> None:
    out = tmp_path / "spectrum.csv"
    main(["spectrum", "--n-th", "1", "--omega0", "5", "--alpha-max", "2", "--s-max", "2", "--out", str(out)])
    table = pd.read_csv(out).set_index(["alpha", "s"])
    assert table.loc[(0, 2), "analytic_re"] == pytest.approx(-2.0)
    assert table.loc[(0, 2), "analytic_im"] == pytest.approx(10.0)
    assert table.loc[(0, 0), "analytic_re"] == 0.0


def test_dump_generator(tmp_path: Path) -> None:
    out = tmp_path / "generator.csv"
    args = ["spectrum", "--n-th", "1", "--n-max", "10", "--dump-generator", "2", "--out", str(out)]
    assert main(args) == 0
    table = pd.read_csv(out)
    assert list(table.columns) == ["n", "diag", "upper", "lower"]
    assert len(table) == 8
    assert table.loc[0, "diag"] == pytest.approx(-8.0)
    assert np.isnan(table["upper"].iloc[-1])


def test_reproduce_fig2_writes_outputs(tmp_path: Path) -> None:
    assert main(["reproduce", "fig2", "--out-dir", str(tmp_path)]) == 0
    target = tmp_path / "fig2"
    names = sorted(path.name for path in target.iterdir())
    assert names == [
        "distances_hs.csv",
        "distances_kl.csv",
        "distances_trace.csv",
        "report.json",
        "trajectory_I.csv",
        "trajectory_II.csv",
    ]
    report = json.loads((target / "report.json").read_text(encoding="utf-8"))
    crossing = report["crossings"][0]
    assert crossing["mpemba"] is True
    assert crossing["initially_farther"] == "II"
    assert "warning" not in report
    distances = pd.read_csv(target / "distances_kl.csv")
    assert list(distances.columns) == ["t", "gamma_t", "D_I", "D_II"]
    trajectory = pd.read_csv(target / "trajectory_II.csv")
    assert trajectory.loc[0, "P_2"] == 1.0


def test_output_is_deterministic(tmp_path: Path) -> None:
    for run in ("a", "b"):
        assert main(["reproduce", "fig2", "--measure", "kl", "--out-dir", str(tmp_path / run)]) == 0
    for path in sorted((tmp_path / "a" / "fig2").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / "fig2" / path.name).read_bytes()


def test_bad_config_exits_with_2(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"bath": {"n_th": 2.0}, "states": []}), encoding="utf-8")
    assert main(["simulate", "--config", str(config), "--out-dir", str(tmp_path)]) == 2
    assert "エラー" in capsys.readouterr().err


def test_missing_config_exits_with_2(tmp_path: Path) -> None:
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 2


def test_truncation_limited_run_exits_with_3(tmp_path: Path) -> None:
    config = tmp_path / "edge.json"
    config.write_text(
        json.dumps(
            {
                "name": "edge",
                "bath": {"n_th": 2.0},
                "states": [{"name": "high", "kind": "fock", "n": 60}],
                "grid": {"t_end": 1.0, "samples": 51},
            }
        ),
        encoding="utf-8",
    )
    code = main(["simulate", "--config", str(config), "--n-max", "64", "--out-dir", str(tmp_path)])
    assert code == 3
    report = json.loads((tmp_path / "edge" / "report.json").read_text(encoding="utf-8"))
    assert "warning" in report
    assert report["states"]["high"]["truncation_limited"] is True


def test_moments_prints_json(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["moments", "--builtin", "fig3", "--l-max", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["Q_thermal"] == pytest.approx([1.0, 2.5, 15.0, 133.75])
    dist5 = report["states"]["dist5"]
    assert (dist5["r"], dist5["h"]) == (2, 6)
    assert dist5["predicted_rate"] == pytest.approx(6.0)
    assert report["states"]["dist4"]["finite_moments"] is False
    assert "r" not in report["states"]["dist4"]


def test_mpemba_prints_crossings(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["mpemba", "--builtin", "fig2", "--no-write"]) == 0
    summary = json.loads(capsys.readouterr().out)
    (crossing,) = summary["crossings"]
    assert crossing["mpemba"] is True
    assert crossing["crossings"][0] == pytest.approx(0.28, abs=0.02)


def _thermal_config(path: Path, t_end: float) -> Path:
    path.write_text(
        json.dumps(
            {
                "name": "slow",
                "bath": {"gamma": 0.5, "n_th": 2.0},
                "states": [{"name": "hot", "kind": "thermal", "n_th": 3.0}],
                "grid": {"t_end": t_end, "samples": 301},
            }
        ),
        encoding="utf-8",
    )
    return path


def test_physical_units_scale_reported_rates(tmp_path: Path) -> None:
    # both runs end at gamma*t = 3
    in_gamma_config = _thermal_config(tmp_path / "gamma.json", 3.0)
    physical_config = _thermal_config(tmp_path / "physical.json", 6.0)
    assert main(["simulate", "--config", str(in_gamma_config), "--out-dir", str(tmp_path / "g")]) == 0
    assert main(
        ["simulate", "--config", str(physical_config), "--units", "physical", "--out-dir", str(tmp_path / "p")]
    ) == 0
    in_gamma = json.loads((tmp_path / "g" / "slow" / "report.json").read_text(encoding="utf-8"))
    physical = json.loads((tmp_path / "p" / "slow" / "report.json").read_text(encoding="utf-8"))
    assert in_gamma["states"]["hot"]["rates"]["kl"]["rate"] == pytest.approx(4.0, rel=0.02)
    assert physical["states"]["hot"]["rates"]["kl"]["rate"] == pytest.approx(2.0, rel=0.02)


def test_cli_script_smoke(tmp_path: Path) -> None:
    cmd = [
        sys.executable,
        str(APP_ROOT / "cli.py"),
        "spectrum",
        "--n-th",
        "1",
        "--alpha-max",
        "2",
        "--s-max",
        "1",
        "--n-max",
        "50",
    ]
    result = subprocess.run(cmd, check=True, capture_output=True, text=True, cwd=tmp_path)
    assert result.returncode == 0
    assert result.stdout.splitlines()[0] == ",".join(
        ["alpha", "s", "analytic_re", "analytic_im", "numeric_re", "numeric_im", "abs_deviation"]
    )


def test_spectrum_command_returns_csv_bytes() -> None:
    payload = spectrum_command(make_bath(1.0, 1.0, 2.0), 3, 0, n=120)
    lines = payload.decode("utf-8").splitlines()
    assert lines[0].startswith("alpha,s,analytic_re")
    assert len(lines) == 1 + 4
    dump = spectrum_command(make_bath(1.0, 1.0, 2.0), 3, 0, n=12, dump_generator=0)
    assert dump.decode("utf-8").splitlines()[0] == "n,diag,upper,lower"


def test_readme_states_the_supported_python() -> None:
    readme = (APP_ROOT / "README.md").read_text(encoding="utf-8")
    match = re.search(r"Python (\d+)\.(\d+) 以降", readme)
    assert match is not None
    assert (int(match.group(1)), int(match.group(2))) == (3, 10)
