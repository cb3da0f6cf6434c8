import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from gextremile.cli import main
from gextremile.distortions import DistortionSpec
from gextremile.empirical import load_csv
from gextremile.estimators import estimate_mroot
from gextremile.losses import parse_loss


def write_values(path, values, events=None):
    with open(path, "w") as fh:
        fh.write("value\n" if events is None else "value,event\n")
        for i, v in enumerate(values):
            v = float(v)
            fh.write(f"{v!r}\n" if events is None else f"{v!r},{events[i]}\n")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_quantile(tmp_path, capsys):
    path = write_values(tmp_path / "d.csv", [1.0, 2.0, 3.0])
    code, out, _ = run(capsys, "estimate", path, "--distortion", "uniform", "--loss", "quantile:0.5")
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"point", "var", "ci", "n", "method", "flags"}
    assert payload["point"] == 2.0


def test_estimate_square_is_mean(tmp_path, capsys):
    path = write_values(tmp_path / "d.csv", [1.0, 2.0, 3.0])
    code, out, _ = run(capsys, "estimate", path, "--loss", "square")
    assert code == 0 and json.loads(out)["point"] == 2.0


def test_estimate_matches_library_bit_for_bit(tmp_path, capsys):
    x = np.random.default_rng(21).standard_normal(123)
    path = write_values(tmp_path / "d.csv", list(x))
    code, out, _ = run(capsys, "estimate", path, "--distortion", "extremile:0.8", "--loss", "expectile:0.9")
    assert code == 0
    direct = estimate_mroot(load_csv(path), DistortionSpec.extremile(0.8), parse_loss("expectile:0.9"))
    assert json.loads(out)["point"] == direct


def test_breakdown_exit_code(tmp_path, capsys):
    path = write_values(tmp_path / "d.csv", list(np.arange(10.0)))
    code, _, err = run(capsys, "estimate", path, "--distortion", "es:0.999", "--loss", "square")
    assert code == 3 and "breakdown" in err


def test_parse_error_names_row(tmp_path, capsys):
    path = tmp_path / "d.csv"
    path.write_text("value\n1\nnot-a-number\n")
    code, _, err = run(capsys, "estimate", str(path))
    assert code == 2 and "row 3" in err


def test_es_curve_hits_closed_forms(tmp_path, capsys):
    x = np.random.default_rng(1).exponential(size=10_000)
    path = write_values(tmp_path / "d.csv", list(x))
    code, out, _ = run(
        capsys, "curve", path, "--distortion", "es", "--loss", "square",
        "--tau-from", "0.5", "--tau-to", "0.9", "--tau-steps", "2",
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    z = 1.959963984540054
    for row, truth in zip(rows, (1 + math.log(2), 1 + math.log(10))):
        se = (float(row["ci_high"]) - float(row["ci_low"])) / (2 * z)
        assert abs(float(row["point"]) - truth) < 3 * se


def test_expectile_curve_is_smooth(tmp_path, capsys):
    x = np.random.default_rng(2).standard_normal(200)
    path = write_values(tmp_path / "d.csv", list(x))
    code, out, err = run(capsys, "curve", path, "--distortion", "extremile", "--loss", "expectile:0.5", "--tau-steps", "20")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 20
    assert all(r["flag"] == "" and math.isfinite(float(r["point"])) for r in rows)
    assert "adjacent decreases along the curve: 0" in err


def test_constant_data_gives_flat_curve(tmp_path, capsys):
    path = write_values(tmp_path / "d.csv", [4.25] * 30)
    code, out, _ = run(capsys, "curve", path, "--distortion", "extremile", "--loss", "square", "--tau-steps", "7")
    assert code == 0
    assert {float(r["point"]) for r in csv.DictReader(io.StringIO(out))} == {4.25}


def test_variance_command(capsys):
    code, out, _ = run(capsys, "variance", "--dist", "expo:1", "--loss", "quantile:0.5")
    assert code == 0
    payload = json.loads(out)
    assert payload["var"] == pytest.approx(1.0, abs=1e-6)
    assert payload["t0"] == pytest.approx(math.log(2))


def test_simulate_smoke_config(tmp_path, capsys):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text("dist=normal:0:1\ndistortion=uniform|extremile:0.9\nloss=square\nn=50\nreps=2\nseed=7\nestimator=M\n")
    code, out, _ = run(capsys, "simulate", str(cfg))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 2
    assert all(math.isfinite(float(r["mse"])) for r in rows)


def test_simulate_censored_rows_for_both_estimators(tmp_path, capsys):
    cfg = tmp_path / "cens.cfg"
    cfg.write_text("dist=expo:1\ndistortion=uniform\nloss=cens-quantile:0.5\nn=100\np_c=0.3\nestimator=grid|km\nreps=3\n")
    code, out, _ = run(capsys, "simulate", str(cfg))
    assert code == 0
    assert [r["estimator"] for r in csv.DictReader(io.StringIO(out))] == ["grid", "km"]


def test_simulate_all_cells_failing(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("dist=expo:1\ndistortion=uniform\nloss=expectile:0.5\nn=10\nreps=2\nestimator=km\n")
    code, out, _ = run(capsys, "simulate", str(cfg))
    assert code == 4
    assert list(csv.DictReader(io.StringIO(out)))[0]["error"]


def test_console_entry_point(tmp_path):
    path = write_values(tmp_path / "d.csv", [1.0, 2.0, 3.0])
    proc = subprocess.run(
        [sys.executable, "-m", "gextremile", "estimate", path, "--loss", "quantile:0.5"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["point"] == 2.0
