import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mvns.cli import main
from mvns.dissipativity import CalibratedConstants

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def read_csv(path):
    lines = Path(path).read_bytes().decode().split("\r\n")
    assert lines[0].startswith("# config_sha256=")
    return list(csv.DictReader(lines[1:]))


def unforced(tmp_path, **extra):
    cfg = {"schema_version": 1, "physical": {"nu": 1.0, "forcing": []},
           "discretization": {"N": 8, "k": 0.1, "ladder": [0.2, 0.1]},
           "calibration": {"radii": [1.0], "runs_per_radius": 1, "horizon": 6.0, "q_runs": 1,
                           "q_horizon": 2.0}}
    cfg.update(extra)
    return write(tmp_path / "cfg.json", cfg)


def test_abstract_verbs(tmp_path, capsys):
    for demo in ("contraction", "ifs", "plusminus"):
        assert main(["abstract", demo, "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / f"{demo}_report.json").read_text())
        assert rep["invariant"]
    cells = json.loads((tmp_path / "contraction_cells.json").read_text())
    assert len(cells["boxes"]) == 2
    assert json.loads((tmp_path / "ifs_report.json").read_text())["extent"] == [0.0, 1.0]
    with pytest.raises(SystemExit) as info:
        main(["abstract", "lorenz"])
    assert info.value.code == 2


def test_run_single_mode(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(CONFIGS / "single_mode.json"), "--steps", "100",
                 "--out", str(out)]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) == 101
    assert float(rows[-1]["h_norm"]) == pytest.approx(1.1**-100, rel=1e-10)
    assert {r["branch_count"] for r in rows} == {"1"}
    assert (out / "final.snap").exists()
    assert main(["run", "--config", str(CONFIGS / "single_mode.json"), "--steps", "0",
                 "--out", str(out)]) == 0
    assert len(read_csv(out / "trajectory.csv")) == 1


def test_calibrate_is_deterministic(tmp_path):
    cfg = unforced(tmp_path)
    assert main(["calibrate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["calibrate", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a = (tmp_path / "a" / "constants.json").read_bytes()
    assert a == (tmp_path / "b" / "constants.json").read_bytes()
    assert CalibratedConstants.from_json(a.decode()).R0_arbitrary


def test_exit_codes(tmp_path, capsys):
    # converge without constants: calibration error
    assert main(["converge", "--config", unforced(tmp_path), "--out", str(tmp_path / "x")]) == 2
    # solver failure: one Newton iteration is never enough here
    bad = unforced(tmp_path, solver={"max_iters": 1}, study={"u0_h_norm": 5.0})
    assert main(["run", "--config", bad, "--u0", "random", "--steps", "3",
                 "--out", str(tmp_path / "y")]) == 3
    assert "step 1" in capsys.readouterr().err
    # R1 smaller than the data: invariant violation
    c = CalibratedConstants(nu=1.0, forcing_h_norm=0.1, R0=1.0, R_star=1e-3, R1=1e-3, kappa0=0.2,
                            kappa1=0.2, kappa2=0.2, C_energy=1.0, Q_radii=[1.0], Q_values=[1.0],
                            t0_radii=[1.0], t0_values=[0.0])
    c.save(tmp_path / "tiny.json")
    cfg = write(tmp_path / "lam.json", {
        "schema_version": 1, "constants": "tiny.json",
        "physical": {"nu": 1.0, "forcing": [{"mode": [0, 1], "amplitude": [0.1, 0.0]}]},
        "discretization": {"N": 8, "ladder": [0.2, 0.1, 0.05]},
        "study": {"ensemble_size": 1, "window": 0.4}})
    assert main(["converge", "--config", cfg, "--out", str(tmp_path / "z")]) == 4
    assert "R1" in capsys.readouterr().err
    # malformed config
    assert main(["run", "--config", write(tmp_path / "bad.json", {"schema_version": 1})]) == 2


def test_check_verb(tmp_path, capsys):
    assert main(["check", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep["ok"] and "demo_ifs" in rep["checks"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mvns", "abstract", "plusminus", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "plusminus_cells.json").exists()
