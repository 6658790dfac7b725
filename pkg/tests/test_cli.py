import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qradjust import detect_crossing, generate, get_design
from qradjust.cli import main, read_surface_csv

FAST = ["--total-draws", "400", "--burn-in", "100", "--thin", "3"]


def _write_data(path, design=3, n=60, seed=1, header="x,y"):
    X, y, _ = generate(get_design(design, n=n), seed)
    np.savetxt(path, np.column_stack([X, y]), delimiter=",", header=header, comments="", fmt="%.17g")
    return X, y


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_smoke_contract(tmp_path):
    # two-column CSV, linear basis, three levels: three draw files and a 3 x n surface
    data = tmp_path / "d.csv"
    _write_data(data, n=40)
    out = tmp_path / "run"
    assert main(["fit", "--input", str(data), "--grid", "0.25,0.5,0.75", "--out", str(out), *FAST]) == 0
    assert sorted(p.name for p in (out / "draws").iterdir()) == ["level_000.csv", "level_001.csv", "level_002.csv"]
    surface = _rows(out / "standard_surface.csv")
    assert len(surface) == 3 * 40
    manifest = json.loads((out / "fit_manifest.json").read_text())
    assert manifest["grid"] == [0.25, 0.5, 0.75]
    assert manifest["crossings_standard"] == len(_rows(out / "crossings_standard.csv"))


def test_fit_is_byte_identical_across_runs(tmp_path):
    data = tmp_path / "d.csv"
    _write_data(data, n=30)
    for name in ("a", "b"):
        assert main(["fit", "--input", str(data), "--grid", "0.2:0.8:0.1", "--seed", "5", "--out", str(tmp_path / name), *FAST]) == 0
    for f in ("standard_surface.csv", "induced_stats.csv", "draws/level_003.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_fit_adjust_evaluate_round_trip(tmp_path):
    data = tmp_path / "d.csv"
    _write_data(data, n=60)
    out = tmp_path / "run"
    assert main(["fit", "--input", str(data), "--out", str(out), "--grid", "0.05:0.95:0.05", *FAST]) == 0
    assert main(["adjust", "--out", str(out), "--mode", "gpr", "--curve-taus", "0.1,0.5,0.9"]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["mode"] == "gpr" and manifest["bandwidth"] > 0
    assert manifest["crossings_after"] == 0
    assert set(manifest) >= {"config", "timings", "version", "seed", "crossings_before"}
    taus, x_ids, cols = read_surface_csv(out / "adjusted_surface.csv")
    assert (out / "adjusted_surface.csv").read_text().splitlines()[0] == "x_id,tau,q_adjusted,q_standard,sigma_star_sq"
    assert len(detect_crossing(cols["q_adjusted"], taus, x_ids)) == manifest["crossings_after"]
    assert len(detect_crossing(cols["q_standard"], taus, x_ids)) == manifest["crossings_before"]
    assert {r["tau"] for r in _rows(out / "curves.csv")} == {"0.10000000000000001", "0.5", "0.90000000000000002"}
    assert main(["evaluate", "--out", str(out), "--design", "3"]) == 0
    assert len(_rows(out / "evaluation.csv")) == 19
    assert len(_rows(out / "true_surface.csv")) == 19 * 60


def test_fixed_bandwidth_is_recorded(tmp_path):
    data = tmp_path / "d.csv"
    _write_data(data, n=30)
    out = tmp_path / "run"
    main(["fit", "--input", str(data), "--out", str(out), "--grid", "0.1:0.9:0.1", *FAST])
    assert main(["adjust", "--out", str(out), "--fixed-b", "0.3"]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["bandwidth"] == 0.3 and not manifest["bandwidth_searched"]


def test_lgpr_on_linear_basis_is_affine(tmp_path):
    data = tmp_path / "d.csv"
    X, _ = _write_data(data, n=50)
    out = tmp_path / "run"
    main(["fit", "--input", str(data), "--out", str(out), "--grid", "0.1:0.9:0.05", *FAST])
    assert main(["adjust", "--out", str(out), "--mode", "lgpr"]) == 0
    taus, x_ids, cols = read_surface_csv(out / "adjusted_surface.csv")
    A = np.column_stack([np.ones(len(x_ids)), X[x_ids, 0]])
    for row in cols["q_adjusted"]:
        coef, *_ = np.linalg.lstsq(A, row, rcond=None)
        assert np.max(np.abs(A @ coef - row)) < 1e-8


def test_config_file_and_flag_override(tmp_path):
    data = tmp_path / "d.csv"
    _write_data(data, n=30)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"input": str(data), "grid": "0.3,0.6", "total_draws": 300, "burn_in": 50, "thin": 5,
                               "out": str(tmp_path / "ignored")}))
    out = tmp_path / "run"
    assert main(["fit", "--config", str(cfg), "--out", str(out), "--grid", "0.2,0.4,0.6"]) == 0
    manifest = json.loads((out / "fit_manifest.json").read_text())
    assert manifest["grid"] == [0.2, 0.4, 0.6] and manifest["retained_draws"] == 50


def test_quadratic_199_level_fit(tmp_path):
    # [PAPER] quadratic basis with levels 0.005, 0.01, ..., 0.995 gives 199 fits
    data = tmp_path / "d.csv"
    _write_data(data, n=40, header="age,igg")
    out = tmp_path / "run"
    args = ["fit", "--input", str(data), "--out", str(out), "--basis", "polynomial:2", "--grid", "0.005:0.995:0.005",
            "--total-draws", "60", "--burn-in", "10", "--thin", "10"]
    assert main(args) == 0
    assert len(list((out / "draws").iterdir())) == 199


def test_simulate_writes_tables(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--design", "1", "--replicates", "1", "--grid", "0.1:0.9:0.1", "--out", str(out),
                 "--export-data", *FAST]) == 0
    reps = _rows(out / "replicates.csv")
    assert len(reps) == 2 * 9 and {r["method"] for r in reps} == {"standard", "lgpr"}
    summary = _rows(out / "summary.csv")
    assert len(summary) == 9 and "crossing_frequency_standard" in summary[0]
    assert (out / "data_000.csv").read_text().startswith("x_1,y\n")
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["crossings_after"] == [0]


@pytest.mark.parametrize("content,code", [
    ("x,y\n1,2\n3,abc\n", 3),
    ("x,y\n1,2\n3\n", 3),
    ("a,b,y\n1,2,3\n2,5,3\n", 3),
])
def test_data_errors_exit_3(tmp_path, capsys, content, code):
    data = tmp_path / "bad.csv"
    data.write_text(content)
    assert main(["fit", "--input", str(data), "--out", str(tmp_path / "o"), "--grid", "0.5", *FAST]) == code
    assert "error" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "c.json"
    bad.write_text('{"nonsense": 1}')
    assert main(["fit", "--config", str(bad)]) == 2
    assert main(["simulate", "--design", "9", "--out", str(tmp_path / "o")]) == 2
    assert main(["adjust", "--out", str(tmp_path / "nothing")]) == 2


def test_adjust_grid_mismatch_exit_2(tmp_path):
    data = tmp_path / "d.csv"
    _write_data(data, n=30)
    out = tmp_path / "run"
    main(["fit", "--input", str(data), "--out", str(out), "--grid", "0.2,0.5,0.8", *FAST])
    assert main(["adjust", "--out", str(out), "--grid", "0.2,0.4,0.8"]) == 2
    assert main(["adjust", "--out", str(out), "--grid", "0.2,0.5,0.8"]) == 0


def test_rank_deficient_design_exit_3(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x,y\n" + "".join(f"1,{i}\n" for i in range(10)))
    assert main(["fit", "--input", str(data), "--out", str(tmp_path / "o"), "--grid", "0.5", *FAST]) == 3


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "qradjust.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
