"""End-to-end command-line runs on small grids, checking exit codes
and the CSV contracts."""

import numpy as np
import pytest

from plaquefb.cli import main

CONFIG = """\
[model]
D = 1.0
H = 3.0
L = 3.0
gamma = 2.0
R = 2.0
rho = 1.6

[grid]
ladder = 20,2; 40,4
m = 20
n_r = 2
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "config.ini"
    path.write_text(CONFIG)
    return path


def test_missing_config_exits_one(tmp_path):
    code = main(["--config", str(tmp_path / "missing.ini"), "steady"])
    assert code == 1


def test_bad_model_values_exit_one(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nD = -1.0\n")
    assert main(["--config", str(bad), "steady"]) == 1


def test_bad_tol_exits_one(config_file):
    assert main(["--config", str(config_file), "--tol", "-1", "steady"]) == 1


def test_steady_writes_snapshots(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["--config", str(config_file), "--out", str(out), "steady"])
    assert code == 0
    for name in ("steady_m.csv", "steady_p.csv", "steady_boundary.csv"):
        lines = (out / name).read_text().splitlines()
        assert lines[0].startswith("# ")
        assert "D=1" in lines[0]
    m_lines = (out / "steady_m.csv").read_text().splitlines()
    assert m_lines[1] == "i,j,r,theta,value"
    assert len(m_lines) == 2 + 20 * 3


def test_converge_csv_shows_second_order(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["--config", str(config_file), "--out", str(out),
                 "converge"])
    assert code == 0
    lines = (out / "converge.csv").read_text().splitlines()
    assert lines[1] == "h,dtheta,err,order"
    rows = [line.split(",") for line in lines[2:]]
    assert len(rows) == 2
    errs = [float(r[2]) for r in rows]
    assert errs[1] < errs[0] / 3
    assert float(rows[1][3]) > 1.5


def test_stability_csv(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["--config", str(config_file), "--out", str(out),
                 "stability"])
    assert code == 0
    lines = (out / "stability.csv").read_text().splitlines()
    assert lines[1] == "L,re_lambda_max,restriction"
    rows = [line.split(",") for line in lines[2:]]
    by_L = {float(r[0]): float(r[1]) for r in rows}
    # instability of the radial state on both sides of the first
    # bifurcation at the reference geometry
    assert by_L[3.0] > 0
    assert by_L[15.0] > 0


def test_grid_override(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["--config", str(config_file), "--out", str(out),
                 "--grid", "12,2", "steady"])
    assert code == 0
    m_lines = (out / "steady_m.csv").read_text().splitlines()
    assert len(m_lines) == 2 + 12 * 3


def test_bifurcate_single_level(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(CONFIG.replace("ladder = 20,2; 40,4", "ladder = 20,2")
                   + "\n[bifurcate]\nmodes = 2\n")
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--out", str(out), "bifurcate"])
    assert code == 0
    lines = (out / "bifurcate.csv").read_text().splitlines()
    assert lines[1] == "n,L_analytic,L_numeric,abs_err"
    row = lines[2].split(",")
    assert int(row[0]) == 2
    assert float(row[1]) == pytest.approx(4.8436424493350545, rel=1e-12)
    assert float(row[3]) < 2.0


def test_branch_diagram(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(CONFIG + "\n[branch]\nmodes = 2\nsteps = 2\n"
                   "radial_L = 3, 4\n")
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--out", str(out), "branch"])
    assert code == 0
    lines = (out / "diagram.csv").read_text().splitlines()
    assert lines[1] == "branch_id,L,projection,re_lambda_max"
    ids = {line.split(",")[0] for line in lines[2:]}
    assert "radial" in ids
    assert "n2" in ids
    projs = [float(line.split(",")[2]) for line in lines[2:]
             if line.split(",")[0] == "n2"]
    assert max(projs) > 0
    det_lines = (out / "detections.csv").read_text().splitlines()
    assert det_lines[1] == "mode,L_tilde,smallest_eig_norm"
    assert (out / "branch_n2_boundary.csv").exists()


def test_atomic_write_leaves_no_temp_files(config_file, tmp_path):
    out = tmp_path / "out"
    main(["--config", str(config_file), "--out", str(out), "converge"])
    assert not list(out.glob("*.tmp"))
