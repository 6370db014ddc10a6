# tests/test_cli.py
import csv
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from src import checks, cli, dynamics, legendre, model
from src.analysis import CheckResult

ROOT = Path(__file__).resolve().parents[1]


def _rows(text):
    return list(csv.reader(text.splitlines()))


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_fmt():
    assert cli.fmt(None) == ""
    assert cli.fmt(float("nan")) == ""
    assert cli.fmt(True) == "true"
    assert cli.fmt(np.int64(3)) == "3"
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert float(cli.fmt(-1.0 / 3.0)) == -1.0 / 3.0


def test_parse_grid():
    np.testing.assert_allclose(cli.parse_grid("-1:1:5"), [-1.0, -0.5, 0.0, 0.5, 1.0])
    np.testing.assert_allclose(cli.parse_grid("0.1, 0.2,0.4"), [0.1, 0.2, 0.4])
    for bad in ("1:2", "a,b", "", "0:1:0"):
        with pytest.raises(Exception):
            cli.parse_grid(bad)


def test_branches_low_and_high_temperature(capsys):
    assert cli.run(["branches", "--j0bar", "1", "--x", "0.1"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["mu", "y_star", "z", "stability", "degenerate"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    assert [r[3] for r in rows[1:]] == [model.MOST_STABLE, model.METASTABLE, model.UNSTABLE]
    assert float(rows[1][1]) == pytest.approx(0.966, abs=5e-4)

    assert cli.run(["branches", "--j0bar", "0.4", "--x", "0.1"]) == 0
    assert len(_rows(capsys.readouterr().out)) == 2


def test_raw_parameters_match_dimensionless(capsys):
    assert cli.run(["branches", "--beta", "0.5", "--j0", "2", "--field", "0.2"]) == 0
    raw = capsys.readouterr().out
    assert cli.run(["branches", "--j0bar", "1", "--x", "0.1"]) == 0
    assert raw == capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["branches", "--j0bar", "1", "--x", "0.1", "--beta", "1"],
        ["branches", "--j0bar", "1"],
        ["branches", "--x", "0.1"],
        ["curve", "--j0bar", "1"],
        ["nonsense"],
        ["toy", "--x-grid", "1:2"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    assert cli.run(argv) == 1
    assert capsys.readouterr().err


def test_curve_then_project(tmp_path):
    curve_csv = tmp_path / "curve.csv"
    xz_csv = tmp_path / "xz.csv"
    assert cli.run(["curve", "--j0bar", "1", "--n", "201", "--out", str(curve_csv)]) == 0
    rows = _read(curve_csv)
    assert rows[0] == ["x", "y", "z", "j0bar", "convention"]
    assert len(rows) == 202
    assert {r[4] for r in rows[1:]} == {legendre.PLUS_YDX}

    assert cli.run(["project", "--in", str(curve_csv), "--plane", "xz", "--out", str(xz_csv)]) == 0
    projected = _read(xz_csv)
    assert projected[0] == ["mu", "interval", "x", "z"]
    curve = legendre.sample_curve(model.ModelParams(j0bar=1.0), np.linspace(-0.999, 0.999, 201))
    (expected,) = legendre.project(curve, "xz")
    assert [r[2:] for r in projected[1:]] == [[cli.fmt(u), cli.fmt(v)] for u, v in expected]
    assert {r[1] for r in projected[1:]} == {"Curve"}


def test_outputs_are_byte_identical(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert cli.run(["curve", "--j0bar", "0.6", "--n", "101", "--convention", "minus", "--out", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_project_pruned_with_svg(tmp_path):
    curve_csv = tmp_path / "curve.csv"
    out_csv, svg = tmp_path / "cusp.csv", tmp_path / "cusp.svg"
    assert cli.run(["curve", "--j0bar", "1", "--out", str(curve_csv)]) == 0
    code = cli.run([
        "project", "--in", str(curve_csv), "--plane", "xz", "--prune", "unstable-metastable",
        "--out", str(out_csv), "--svg", str(svg),
    ])
    assert code == 0
    rows = _read(out_csv)
    assert {r[0] for r in rows[1:]} == {"1"}
    text = svg.read_text(encoding="utf-8")
    assert text.startswith("<svg")
    assert text.count("<polyline") == 2


def test_project_short_curve_exits_2(tmp_path):
    curve_csv = tmp_path / "curve.csv"
    assert cli.run(["curve", "--j0bar", "1", "--ymin", "-0.9", "--ymax", "0.72", "--n", "600", "--out", str(curve_csv)]) == 0
    code = cli.run([
        "project", "--in", str(curve_csv), "--plane", "xz", "--prune", "unstable", "--out", str(tmp_path / "p.csv"),
    ])
    assert code == 2
    assert cli.run(["project", "--in", str(curve_csv), "--plane", "xz", "--out", str(tmp_path / "p.csv")]) == 0


def test_project_rejects_bad_files(tmp_path):
    bogus = tmp_path / "bogus.csv"
    bogus.write_text("a,b\n1,2\n", encoding="utf-8")
    out = tmp_path / "out.csv"
    assert cli.run(["project", "--in", str(bogus), "--plane", "xz", "--out", str(out)]) == 1
    assert cli.run(["project", "--in", str(tmp_path / "missing.csv"), "--plane", "xz", "--out", str(out)]) == 1


def test_flow_output(tmp_path):
    out = tmp_path / "flow.csv"
    root = model.solve_branches(model.ModelParams(j0bar=1.0), 0.3)[0]
    code = cli.run([
        "flow", "--variant", "squared", "--j0bar", "1", "--x", "0.3",
        "--z0", repr(root.z - 0.1), "--dt", "0.01", "--t-max", "5", "--out", str(out),
    ])
    assert code == 0
    rows = _read(out)
    assert rows[0] == ["t", "x", "y", "z", "region", "V", "dVdt"]
    assert len(rows) == 502
    assert {r[4] for r in rows[1:]} == {"D1Plus"}
    values = [float(r[5]) for r in rows[1:]]
    assert values[-1] < values[0]


def test_flow_blowup_exits_2(tmp_path):
    params = model.ModelParams(j0bar=1.0)
    psi2 = model.solve_branches(params, 0.3)[1].z
    code = cli.run([
        "flow", "--variant", "quadratic", "--j0bar", "1", "--x", "0.3",
        "--z0", repr(psi2 + 0.05), "--dt", "0.01", "--out", str(tmp_path / "f.csv"),
    ])
    assert code == 2


def test_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.run(["sweep", "--j0bar", "1", "--x-max", "0.6", "--steps", "31", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == ["step", "direction", "x", "y", "z"]
    assert len(rows) == 32
    assert rows[1][1] == "up" and rows[-1][1] == "down"
    assert float(rows[1][2]) == pytest.approx(-0.6)
    assert cli.run(["sweep", "--j0bar", "0.4", "--x-max", "0.6", "--steps", "31", "--out", str(out)]) == 2
    assert cli.run(["sweep", "--j0bar", "1", "--x-max", "0.6", "--steps", "2", "--out", str(out)]) == 1


def test_basin_with_svg(tmp_path):
    out, svg = tmp_path / "basin.csv", tmp_path / "basin.svg"
    code = cli.run([
        "basin", "--variant", "squared", "--j0bar", "1", "--x-grid", "-0.4,0,0.4",
        "--offsets", "-0.2,-0.05", "--out", str(out), "--svg", str(svg),
    ])
    assert code == 0
    rows = _read(out)
    assert rows[0] == ["x", "offset", "y0", "z0", "y", "z", "mu", "gap", "status"]
    assert [r[8] for r in rows[1:]] == ["ok", "ok", "region", "region", "ok", "ok"]
    assert all(r[6] == "1" for r in rows[1:] if r[8] == "ok")
    assert svg.read_text(encoding="utf-8").count("<polyline") == 2
    assert cli.run([
        "basin", "--variant", "linear", "--j0bar", "1", "--x-grid", "0.4", "--offsets", "0", "--out", str(out),
    ]) == 1


def test_negative_values_parse_in_both_forms(tmp_path):
    spaced, joined = tmp_path / "spaced.csv", tmp_path / "joined.csv"
    common = ["basin", "--variant", "squared", "--j0bar", "1"]
    assert cli.run(common + ["--x-grid", "-0.4:0.4:5", "--offsets", "-0.2,-0.05", "--out", str(spaced)]) == 0
    assert cli.run(common + ["--x-grid=-0.4:0.4:5", "--offsets=-0.2,-0.05", "--out", str(joined)]) == 0
    assert spaced.read_bytes() == joined.read_bytes()
    rows = _read(spaced)
    assert len(rows) == 11
    assert float(rows[1][0]) == pytest.approx(-0.4)
    assert float(rows[1][1]) == pytest.approx(-0.2)


def test_negative_scientific_rate(tmp_path):
    out = tmp_path / "flow.csv"
    root = model.solve_branches(model.ModelParams(j0bar=1.0), -0.3)[0]
    code = cli.run([
        "flow", "--variant", "squared", "--j0bar", "1", "--x", "-0.3", "--z0", repr(root.z - 0.1),
        "--psi0-rate", "-1e-2", "--dt", "0.01", "--t-max", "1", "--out", str(out),
    ])
    assert code == 0
    assert {r[4] for r in _read(out)[1:]} == {"D1Minus"}


def test_join_negative_values():
    assert cli._join_negative_values(["toy", "--x-grid", "-.1,0", "--out", "-"]) == ["toy", "--x-grid=-.1,0", "--out", "-"]
    assert cli._join_negative_values(["check", "--level", "quick"]) == ["check", "--level", "quick"]


def test_basin_help_states_psi0_default(capsys):
    assert cli.run(["basin", "--help"]) == 0
    out = " ".join(capsys.readouterr().out.split())
    assert "default balanced; constant weight via --psi0 constant" in out


def test_generate(tmp_path):
    out, svg = tmp_path / "gen.csv", tmp_path / "gen.svg"
    assert cli.run(["generate", "--generator", "cubic", "--delta-grid", "-0.5:1:7", "--out", str(out), "--svg", str(svg)]) == 0
    rows = _read(out)
    assert rows[0] == ["delta", "x", "y", "z", "convention"]
    assert len(rows) == 8
    assert {r[4] for r in rows[1:]} == {legendre.MINUS_YDX}
    delta, x, y, z = (float(v) for v in rows[1][:4])
    assert (delta, x, y) == (-0.5, 1.0, 0.25)
    assert z == pytest.approx(0.0625 + 0.125 / 3.0)
    assert svg.read_text(encoding="utf-8").count("<polyline") == 1

    assert cli.run(["generate", "--generator", "logcosh", "--delta-grid", "-1,0,1", "--convention", "plus", "--out", str(out)]) == 0
    rows = _read(out)
    assert float(rows[2][3]) == pytest.approx(-math.log(2.0))
    assert cli.run(["generate", "--generator", "cubic", "--delta-grid", "1,0", "--out", str(out)]) == 2


def test_field(tmp_path):
    out, svg = tmp_path / "field.csv", tmp_path / "field.svg"
    code = cli.run([
        "field", "--variant", "squared", "--j0bar", "1", "--x", "-0.3",
        "--y-grid", "-0.9:0.9:4", "--z-grid", "-1.2:-0.9:3", "--out", str(out), "--svg", str(svg),
    ])
    assert code == 0
    rows = _read(out)
    assert rows[0] == ["y", "z", "ydot", "zdot"]
    assert len(rows) == 13
    assert float(rows[1][0]) == pytest.approx(-0.9) and float(rows[1][1]) == pytest.approx(-1.2)
    params = model.ModelParams(j0bar=1.0)
    _, ydot, zdot = dynamics.vector_field(
        dynamics.HamiltonianVariant(dynamics.SQUARED), params, dynamics.ContactState(-0.3, float(rows[5][0]), float(rows[5][1]))
    )
    assert (float(rows[5][2]), float(rows[5][3])) == pytest.approx((ydot, zdot))
    # 12 arrows and the two fixed branch levels
    assert svg.read_text(encoding="utf-8").count("<polyline") == 14
    assert cli.run(["field", "--variant", "cubic", "--j0bar", "1", "--x", "0", "--y-grid", "0,1", "--z-grid", "0,1", "--out", str(out)]) == 2


def test_audit_to_stdout(capsys):
    assert cli.run(["audit", "--beta", "0.4", "--j0", "1", "--field", "0.1", "--n-list", "64,256"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["n", "exact", "saddle", "gap"]
    assert [r[0] for r in rows[1:]] == ["64", "256"]
    assert float(rows[2][3]) < float(rows[1][3])
    assert cli.run(["audit", "--beta", "0.4", "--j0", "1", "--field", "0.1", "--n-list", "256,64"]) == 1


def test_toy(tmp_path):
    out = tmp_path / "toy.csv"
    assert cli.run(["toy", "--x-grid", "-0.125,0", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == ["x", "y_plus", "y_minus", "z_plus", "z_minus"]
    assert float(rows[1][1]) == float(rows[1][2]) == 0.0625
    assert (float(rows[2][1]), float(rows[2][2])) == (0.25, 0.0)
    assert cli.run(["toy", "--x-grid", "-0.2,0", "--out", str(out)]) == 2


def test_check_exit_codes(monkeypatch, capsys):
    passing = [CheckResult("alpha", True, 1.0, "fine")]
    monkeypatch.setattr(checks, "run_checks", lambda level: passing)
    assert cli.run(["check", "--level", "quick"]) == 0
    out = capsys.readouterr().out
    assert _rows(out) == [["name", "passed", "margin", "detail"], ["alpha", "true", "1", "fine"]]

    failing = passing + [CheckResult("beta", False, -0.5, "too far")]
    monkeypatch.setattr(checks, "run_checks", lambda level: failing)
    assert cli.run(["check"]) == 3
    assert "FAILED beta" in capsys.readouterr().err


def test_module_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "src.cli", "branches", "--j0bar", "1", "--x", "0"],
        cwd=ROOT, capture_output=True, text=True, check=False,
    )
    assert result.returncode == 0, result.stderr
    rows = _rows(result.stdout)
    assert len(rows) == 4
    assert float(rows[1][1]) == pytest.approx(0.9575, abs=1e-4)


@pytest.mark.slow
def test_full_check_level_exits_0(capsys):
    assert cli.run(["check", "--level", "full"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["name", "passed", "margin", "detail"]
    assert len(rows) > 40
    assert {r[1] for r in rows[1:]} == {"true"}
