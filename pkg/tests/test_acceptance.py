"""Acceptance battery: one criterion per test, each printing a single
PASS/FAIL line on the real terminal stream."""

from dataclasses import replace

import numpy as np
import pytest

from plaquefb.branch import (DetectedBifurcation, continue_branch,
                             detect_on_ladder, mode_purity,
                             tangent_cone_switch)
from plaquefb.grid import BoundaryCurve, PolarGrid, solve_field
from plaquefb.modes import (bifurcation_point, dispersion, growth_rate,
                            near_wall_monotonicity)
from plaquefb.radial import (ModelParams, clearance_t, radial_steady_state)
from plaquefb.solver import FreeBoundaryProblem
from plaquefb.bessel import (bessel_i, bessel_i_prime, bessel_k,
                             bessel_k_prime)

REF = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=1.6)
LADDER = [(20, 2), (40, 4), (80, 8), (160, 16)]


@pytest.fixture
def verdict(capsys):
    def _verdict(number: int, label: str, passed: bool, detail: str):
        line = (f"ACCEPTANCE {number} [{label}]: "
                f"{'PASS' if passed else 'FAIL'} ({detail})")
        with capsys.disabled():
            print(line, flush=True)
        assert passed, line
    return _verdict


def test_criterion_1_field_convergence(verdict):
    st = radial_steady_state(REF)
    errs = []
    for (m, n_r) in LADDER:
        g = PolarGrid(BoundaryCurve.circle(REF.rho, m), REF.R, n_r)
        M = solve_field(g, REF, "M")
        P = solve_field(g, REF, "P", m_values=M, T=st.T)
        m_exact = np.array([st.m(r) for r in g.r[0]])
        p_exact = np.array([st.p(r) for r in g.r[0]])
        errs.append(max(float(np.max(np.abs(M - m_exact[None, :]))),
                        float(np.max(np.abs(P - p_exact[None, :])))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all((orders >= 1.8) & (orders <= 2.2)) and errs[-1] <= 5e-4)
    verdict(1, "field convergence", ok,
             f"orders={np.round(orders, 3).tolist()} "
             f"finest={errs[-1]:.3e} (tol: orders in [1.8,2.2], <=5e-4)")


def test_criterion_2_bifurcation_accuracy(verdict):
    details, ok = [], True
    for n in (2, 3, 4):
        L_n = bifurcation_point(REF, n).L_n
        recs = detect_on_ladder(REF, LADDER, n, (0.5 * L_n, 1.3 * L_n))
        if len(recs) < 3:
            ok = False
            details.append(f"n={n}: only {len(recs)} levels detected")
            continue
        raw = [abs(r.L_raw - L_n) for r in recs]
        shrink = all(raw[k + 1] <= raw[k] / 3 for k in range(len(raw) - 1))
        finest = recs[-1]
        final = abs(finest.L_refined - L_n)
        at_target = (finest.m, finest.n_r) == (160, 16) and final <= 0.05
        ok = ok and shrink and at_target
        details.append(f"n={n}: raw={[f'{e:.3g}' for e in raw]} "
                       f"final={final:.3e}")
    verdict(2, "bifurcation accuracy", ok,
             "; ".join(details) + " (tol: shrink>=3x, final<=0.05)")


def test_criterion_3_analytic_identities(verdict):
    devs = {}
    devs["L0"] = abs(bifurcation_point(REF, 0).L_n)
    devs["L1"] = abs(bifurcation_point(REF, 1).L_n)
    worst_h = 0.0
    worst_affine = 0.0
    for n in (2, 3, 4):
        rec = bifurcation_point(REF, n)
        p_n = replace(REF, L=rec.L_n)
        st_n = radial_steady_state(p_n)
        worst_h = max(worst_h, abs(dispersion(0.0, n, p_n, st_n)))
        for L in (1.0, 3.0, 10.0):
            p = replace(REF, L=L)
            st = radial_steady_state(p)
            predicted = rec.c1_val - rec.c2_val * L
            worst_affine = max(worst_affine,
                               abs(dispersion(0.0, n, p, st) - predicted))
    worst_w = 0.0
    for n in (0, 1, 2, 4):
        for x in (0.7, 1.6, 2.8):
            w = bessel_i(n, x) * bessel_k_prime(n, x) - \
                bessel_i_prime(n, x) * bessel_k(n, x)
            worst_w = max(worst_w, abs(w + 1.0 / x))
    t_zero = clearance_t(replace(REF, L=0.0))
    t_pos = all(clearance_t(replace(REF, L=L)) > 0
                for L in (1e-6, 1.0, 100.0))
    ok = (devs["L0"] < 1e-12 and devs["L1"] < 1e-12 and worst_h < 1e-9
          and worst_affine < 1e-9 and worst_w < 1e-10
          and t_zero == 0.0 and t_pos)
    verdict(3, "analytic identities", ok,
             f"L0={devs['L0']:.1e} L1={devs['L1']:.1e} "
             f"h(0,n,L_n)={worst_h:.1e} affine={worst_affine:.1e} "
             f"wronskian={worst_w:.1e} T(0)={t_zero} "
             "(tol: 1e-9 dispersion, 1e-10 wronskian)")


def test_criterion_4_near_wall_monotonicity(verdict):
    p = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=0.975 * 2.0)
    rep = near_wall_monotonicity(p, n_max=8)
    ok = rep.in_regime and rep.all_hold
    verdict(4, "near-wall monotonicity", ok,
             f"C2>0:{rep.c2_positive} C2 dec:{rep.c2_decreasing} "
             f"C1 inc:{rep.c1_increasing} L_n inc:{rep.l_increasing} "
             "(exact ordering, n in [2,8])")


def test_criterion_5_instability_existence(verdict):
    details, ok = [], True
    for L in (1.0, 3.0, 15.0):
        p = replace(REF, L=L)
        st = radial_steady_state(p)
        found = None
        for n in range(2, 33):
            g = growth_rate(n, p, st)
            if g.a is not None and g.a > 0:
                resid = abs(dispersion(g.a, n, p, st))
                if resid < 1e-10:
                    found = (n, g.a, resid)
                    break
        ok = ok and found is not None
        details.append(f"L={L:g}: n={found[0]} a={found[1]:.4g}"
                       if found else f"L={L:g}: none")
    p_wall = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=1.9)
    st_wall = radial_steady_state(p_wall)
    low_ok = all(growth_rate(n, p_wall, st_wall).a is None for n in (0, 1))
    ok = ok and low_ok
    verdict(5, "instability existence", ok,
             "; ".join(details) + f"; low modes stable:{low_ok} "
             "(tol: |h(a)|<1e-10)")


def test_criterion_6_spectrum_signs(verdict):
    full_ok, full_detail = True, []
    for L in (0.0, 3.0, 15.0, 120.0, 200.0):
        prob = FreeBoundaryProblem(replace(REF, L=L), 40, 8)
        sol = prob.solve_radial()
        lam = prob.linearized_spectrum(sol).lambda_max.real
        full_ok = full_ok and lam > 0
        full_detail.append(f"{L:g}:{lam:+.3g}")
    sym_ok, flips = True, []
    for n_r in (8, 16, 32):
        prob = FreeBoundaryProblem(REF, 1, n_r)
        vals = {}
        for L in (5.0, 10.0, 50.0, 100.0, 140.0, 150.0, 200.0):
            p = FreeBoundaryProblem(replace(REF, L=L), 1, n_r)
            sol = p.solve_radial()
            vals[L] = p.linearized_spectrum(sol).lambda_max.real
        neg = all(vals[L] < 0 for L in (5.0, 10.0, 50.0, 100.0, 140.0))
        pos = all(vals[L] > 0 for L in (150.0, 200.0))
        sym_ok = sym_ok and neg and pos
        flips.append(f"n_r={n_r}: flip in (140,150)" if neg and pos
                     else f"n_r={n_r}: wrong signs {vals}")
    ok = full_ok and sym_ok
    verdict(6, "spectrum signs", ok,
             "full re(lam_max) " + " ".join(full_detail) + "; " +
             "; ".join(flips) + " (sign targets only)")


def test_criterion_7_branch_structure(verdict):
    m, n_r = 40, 4
    details, ok = [], True
    for n in (2, 3, 4):
        L_n = bifurcation_point(REF, n).L_n
        recs = detect_on_ladder(REF, [(m, n_r)], n, (0.5 * L_n, 1.3 * L_n))
        if not recs:
            ok = False
            details.append(f"n={n}: no detection")
            continue
        det = DetectedBifurcation(n, recs[0].L_raw,
                                  recs[0].smallest_eig_norm)
        start = tangent_cone_switch(REF, det, m, n_r)
        pts = continue_branch(REF, start, m, n_r, n_steps=3)
        mode_ok, proj_ok, lam_ok = True, True, True
        for pt in pts:
            purity = mode_purity(pt.rho, n)
            mode_ok = mode_ok and purity > 0.90
            proj_ok = proj_ok and pt.projection > 0
            prob = FreeBoundaryProblem(replace(REF, L=pt.L), m, n_r)
            lam = prob.linearized_spectrum(pt.solution).lambda_max.real
            lam_ok = lam_ok and lam > 0
        ok = ok and mode_ok and proj_ok and lam_ok
        details.append(f"n={n}: purity>{0.9}:{mode_ok} P>0:{proj_ok} "
                       f"re(lam)>0:{lam_ok} pts={len(pts)}")
    verdict(7, "branch structure", ok, "; ".join(details))


def test_criterion_8_spectral_vs_matrix(verdict):
    m, n_r = 80, 16
    prob = FreeBoundaryProblem(REF, m, n_r)
    sol = prob.solve_radial()
    st = radial_steady_state(REF)
    rels, ok = [], True
    for n in range(2, 7):
        a = growth_rate(n, REF, st).a
        lam = prob.mode_growth_rate(sol, n)
        rel = abs(lam - a) / abs(a)
        rels.append(f"n={n}:{rel:.3%}")
        ok = ok and rel <= 0.05
    verdict(8, "spectral vs matrix", ok,
             " ".join(rels) + " (tol: 5% at h=0.025)")
