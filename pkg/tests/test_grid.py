"""Geometry, periodic derivatives, curvature, discrete Laplacian, and
the direct field solves, verified against closed forms."""

import math

import numpy as np
import pytest

from plaquefb.grid import (BoundaryCurve, InvalidGeometryError, PolarGrid,
                           apply_laplacian, curvature, curvature_of,
                           periodic_deriv, periodic_second_deriv, solve_field)
from plaquefb.radial import ModelParams, radial_steady_state

REF = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=1.6)


def test_circle_curve():
    c = BoundaryCurve.circle(1.6, 16)
    assert c.m == 16
    assert np.allclose(c.values, 1.6)
    assert np.allclose(np.diff(c.theta), 2 * np.pi / 16)


def test_cosine_curve():
    c = BoundaryCurve.cosine(1.6, 0.05, 3, 24)
    assert np.allclose(c.values, 1.6 + 0.05 * np.cos(3 * c.theta))


def test_curve_rejects_tiny_sampling():
    with pytest.raises(ValueError):
        BoundaryCurve.circle(1.6, 4)


@pytest.mark.parametrize("m", [32, 64])
def test_periodic_deriv_orders(m):
    theta = 2 * np.pi * np.arange(m) / m
    vals = np.sin(3 * theta)
    d = periodic_deriv(vals, 2 * np.pi / m)
    d2 = periodic_second_deriv(vals, 2 * np.pi / m)
    tol = (2 * np.pi / m) ** 4 * 3 ** 5
    assert np.max(np.abs(d - 3 * np.cos(3 * theta))) < tol
    assert np.max(np.abs(d2 + 9 * np.sin(3 * theta))) < 3 * tol


def test_circle_curvature():
    c = BoundaryCurve.circle(1.6, 32)
    assert np.allclose(curvature(c), 1.0 / 1.6, atol=1e-12)


def test_perturbed_curvature_matches_closed_form():
    # kappa for rho(theta) = rho0 + eps cos(n theta), exact formula
    rho0, eps, n, m = 1.6, 1e-3, 2, 256
    c = BoundaryCurve.cosine(rho0, eps, n, m)
    rho = c.values
    rho_t = -eps * n * np.sin(n * c.theta)
    rho_tt = -eps * n * n * np.cos(n * c.theta)
    exact = (rho ** 2 + 2 * rho_t ** 2 - rho * rho_tt) / \
        (rho ** 2 + rho_t ** 2) ** 1.5
    assert np.max(np.abs(curvature(c) - exact)) < 1e-9


def test_grid_layout():
    g = PolarGrid(BoundaryCurve.circle(1.6, 8), 2.0, 4)
    assert g.n_nodes == 8 * 5
    assert g.r[3, 0] == pytest.approx(1.6)
    assert g.r[3, 4] == pytest.approx(2.0)
    assert g.node(0, 0) == 0
    assert g.node(2, 1) == 7
    assert g.node(0, 8) == g.node(0, 0)  # periodic wrap


def test_grid_rejects_boundary_outside_wall():
    with pytest.raises(InvalidGeometryError):
        PolarGrid(BoundaryCurve.circle(2.5, 8), 2.0, 4)


def test_laplacian_on_harmonic_function():
    # r^2 cos(2 theta) is harmonic; interior residual converges to zero
    errs = []
    for (m, n_r) in [(40, 4), (80, 8)]:
        g = PolarGrid(BoundaryCurve.circle(1.6, m), 2.0, n_r)
        vals = g.r ** 2 * np.cos(2 * g.theta)[:, None]
        lap = apply_laplacian(g, vals)
        errs.append(float(np.max(np.abs(lap[:, 1:n_r]))))
    assert errs[0] < 5e-2
    assert errs[1] < errs[0] / 3


def test_solve_field_matches_radial_m():
    st = radial_steady_state(REF)
    errs = []
    for (m, n_r) in [(20, 2), (40, 4), (80, 8)]:
        g = PolarGrid(BoundaryCurve.circle(REF.rho, m), REF.R, n_r)
        M = solve_field(g, REF, "M")
        exact = np.array([st.m(r) for r in g.r[0]])
        errs.append(float(np.max(np.abs(M - exact[None, :]))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.7)
    assert errs[-1] < 1e-3


def test_solve_field_matches_radial_p():
    st = radial_steady_state(REF)
    g = PolarGrid(BoundaryCurve.circle(REF.rho, 40), REF.R, 4)
    M = solve_field(g, REF, "M")
    P = solve_field(g, REF, "P", m_values=M, T=st.T)
    exact = np.array([st.p(r) for r in g.r[0]])
    assert float(np.max(np.abs(P - exact[None, :]))) < 5e-3


def test_curvature_of_matches_curve_wrapper():
    c = BoundaryCurve.cosine(1.6, 0.02, 3, 64)
    assert np.allclose(curvature(c),
                       curvature_of(c.values, 2 * np.pi / 64))


def test_csv_writers(tmp_path):
    from plaquefb.grid import boundary_to_csv, field_to_csv
    g = PolarGrid(BoundaryCurve.circle(1.6, 8), 2.0, 2)
    vals = np.ones((8, 3))
    fp = tmp_path / "field.csv"
    bp = tmp_path / "bdry.csv"
    field_to_csv(g, vals, fp, "test comment")
    boundary_to_csv(g, bp, "test comment")
    lines = fp.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "i,j,r,theta,value"
    assert len(lines) == 2 + 8 * 3
    blines = bp.read_text().splitlines()
    assert blines[1] == "j,theta,rho"
    assert len(blines) == 2 + 8
