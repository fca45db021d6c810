"""Detection, branch switching, and continuation on coarse grids."""

import numpy as np
import pytest

from plaquefb.branch import (DetectedBifurcation, _richardson2,
                             continue_branch, detect_on_ladder,
                             detections_to_csv, mode_purity, projection,
                             tangent_cone_switch, track_radial_branch)
from plaquefb.modes import bifurcation_point
from plaquefb.radial import ModelParams

REF = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=1.6)
L2 = 4.8436424493350545


def test_projection_zero_for_radial_boundary():
    assert projection(np.full(16, 1.6), 2 * np.pi / 16) == 0.0


def test_projection_of_cosine_boundary():
    m = 16
    theta = 2 * np.pi * np.arange(m) / m
    rho = 1.6 + 0.1 * np.cos(2 * theta)
    # max at j=0, min at j=4 (first attainment), range 0.2
    expected = 0.2 * 4 * (2 * np.pi / m)
    assert projection(rho, 2 * np.pi / m) == pytest.approx(expected,
                                                           rel=1e-12)


def test_richardson2_exact_on_model_sequence():
    X, c2, c3 = 3.7, 1.9, -0.8
    seq = [X + c2 * s ** 2 + c3 * s ** 3 for s in (1.0, 0.5, 0.25)]
    assert _richardson2(*seq) == pytest.approx(X, rel=1e-12)


def test_track_radial_branch_detects_first_bifurcation():
    pts, dets = track_radial_branch(REF, [3.0, 4.0, 5.0, 6.0], 20, 2,
                                    modes=(2,))
    assert len(pts) == 4
    assert all(p.projection < 1e-8 for p in pts)
    assert len(dets) == 1
    det = dets[0]
    assert det.mode == 2
    # coarse-grid value: right neighborhood, first-level accuracy
    assert abs(det.L_tilde - L2) < 2.0
    assert det.smallest_eig_norm < 1e-4


def test_detect_on_ladder_refines():
    recs = detect_on_ladder(REF, [(20, 2), (40, 4)], 2,
                            (0.5 * L2, 1.3 * L2))
    assert len(recs) == 2
    errs = [abs(r.L_raw - L2) for r in recs]
    assert errs[1] < errs[0] / 3


@pytest.fixture(scope="module")
def switched():
    recs = detect_on_ladder(REF, [(20, 2)], 2, (0.5 * L2, 1.3 * L2))
    det = DetectedBifurcation(2, recs[0].L_raw, recs[0].smallest_eig_norm)
    return det, tangent_cone_switch(REF, det, 20, 2)


def test_tangent_cone_switch_leaves_radial_branch(switched):
    _, start = switched
    assert start.projection > 0.0
    assert start.solution.residual_norm < 1e-8
    assert mode_purity(start.rho, 2) > 0.9


def test_continue_branch_grows_amplitude(switched):
    _, start = switched
    pts = continue_branch(REF, start, 20, 2, n_steps=4)
    assert len(pts) >= 3
    projs = [p.projection for p in pts]
    assert projs[-1] > projs[0]
    for p in pts:
        assert p.solution.residual_norm < 1e-8
        assert mode_purity(p.rho, 2) > 0.9


def test_mode_purity_of_pure_cosine():
    theta = 2 * np.pi * np.arange(32) / 32
    assert mode_purity(1.6 + 0.1 * np.cos(3 * theta), 3) == pytest.approx(
        1.0, abs=1e-12)


def test_detections_csv(tmp_path):
    dets = [DetectedBifurcation(2, 4.84, 1e-6)]
    path = tmp_path / "d.csv"
    detections_to_csv(dets, path, "params here")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "mode,L_tilde,smallest_eig_norm"
    assert len(lines) == 3
