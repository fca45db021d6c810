"""Cross-module verification battery.

Every check compares two independent routes to the same quantity
(closed form vs. discrete, spectral reduction vs. assembled operator,
analytic identity vs. computed value) and reports a CheckReport.  The
battery runs at two scales: "fast" for CI (coarse grids) and "full"
(table-reproduction grids).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import grid as grid_mod
from .bessel import bessel_i, bessel_k, bessel_i_prime, bessel_k_prime
from .branch import detect_on_ladder, track_radial_branch
from .grid import BoundaryCurve, PolarGrid, solve_field
from .modes import (bifurcation_point, dispersion, growth_rate, near_wall_monotonicity,
                    mode_linearization)
from .radial import ModelParams, clearance_t, radial_steady_state
from .solver import FreeBoundaryProblem, frechet_kernel_check

DEFAULT_PARAMS = ModelParams(D=1.0, H=3.0, L=3.0, gamma=2.0, R=2.0, rho=1.6)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one verification check."""

    name: str
    passed: bool
    measured: dict
    tolerance: float
    anchor: str


def _report(name, passed, measured, tol, anchor) -> CheckReport:
    clean = {}
    for k, v in measured.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        clean[k] = v
    return CheckReport(name, bool(passed), clean, tol, anchor)


# -- individual checks --------------------------------------------------


def check_clearance_positivity(params: ModelParams) -> CheckReport:
    """T > 0 for L > 0 and T = 0 iff L = 0."""
    t_pos = clearance_t(params)
    t_zero = clearance_t(replace(params, L=0.0))
    ok = t_pos > 0 and abs(t_zero) < 1e-14
    return _report("clearance-positivity", ok,
                   {"T": t_pos, "T_at_L0": t_zero}, 1e-14,
                   "unique positive clearance rate")


def check_profile_positivity(params: ModelParams) -> CheckReport:
    """M_s > 0 on [rho, R]; mode profiles Q_n > 0 for n <= 6."""
    st = radial_steady_state(params)
    rs = np.linspace(params.rho, params.R, 101)
    m_min = min(st.m(r) for r in rs)
    q_min = math.inf
    for n in range(0, 7):
        q = mode_linearization(params, n, state=st)
        q_min = min(q_min, min(q.q(r) for r in rs))
    ok = m_min > 0 and q_min > 0
    return _report("profile-positivity", ok,
                   {"min_M": m_min, "min_Q": q_min}, 0.0,
                   "positive steady profiles")


def check_wronskian(params: ModelParams) -> CheckReport:
    """I_n' K_n - I_n K_n' = 1/x at sampled orders and arguments."""
    worst = 0.0
    for n in (0, 1, 2, 5):
        for x in (0.5, 1.7, params.z(params.rho), params.z(params.R), 10.0):
            w = (bessel_i_prime(n, x) * bessel_k(n, x)
                 - bessel_i(n, x) * bessel_k_prime(n, x))
            worst = max(worst, abs(w - 1.0 / x))
    return _report("bessel-wronskian", worst < 1e-10, {"max_dev": worst},
                   1e-10, "modified Bessel Wronskian identity")


def check_radial_pde_residual(params: ModelParams) -> CheckReport:
    """Closed-form M_s, P_s satisfy their ODEs pointwise."""
    st = radial_steady_state(params)
    worst_m = worst_p = 0.0
    for r in np.linspace(params.rho, params.R, 41):
        res_m = (params.D * (st.m_second(r) + st.m_prime(r) / r)
                 - params.H * st.m(r))
        res_p = st.p_second(r) + st.p_prime(r) / r - st.T + params.L * st.m(r)
        worst_m = max(worst_m, abs(res_m))
        worst_p = max(worst_p, abs(res_p))
    ok = worst_m < 1e-10 and worst_p < 1e-10
    return _report("radial-pde-residual", ok,
                   {"max_M_residual": worst_m, "max_P_residual": worst_p},
                   1e-10, "closed-form steady state solves the system")


def check_degenerate_modes(params: ModelParams) -> CheckReport:
    """L_0 = L_1 = 0 via the (n^3 - n) factor."""
    l0 = bifurcation_point(params, 0).L_n
    l1 = bifurcation_point(params, 1).L_n
    ok = abs(l0) < 1e-12 and abs(l1) < 1e-12
    return _report("degenerate-modes", ok, {"L_0": l0, "L_1": l1}, 1e-12,
                   "modes 0 and 1 have no bifurcation")


def check_dispersion_at_bifurcation(params: ModelParams) -> CheckReport:
    """h(0, n, L_n) = 0 and h(0, n, L) = C1 - C2 L."""
    st = radial_steady_state(params)
    worst_root = worst_line = 0.0
    for n in (2, 3, 4, 5):
        rec = bifurcation_point(params, n, st)
        pn = replace(params, L=rec.L_n)
        stn = radial_steady_state(pn)
        worst_root = max(worst_root, abs(dispersion(0.0, n, pn, stn)))
        h0 = dispersion(0.0, n, params, st)
        worst_line = max(worst_line,
                         abs(h0 - (rec.c1_val - rec.c2_val * params.L)))
    ok = worst_root < 1e-9 and worst_line < 1e-9
    return _report("dispersion-identities", ok,
                   {"max_h_at_Ln": worst_root, "max_line_dev": worst_line},
                   1e-9, "dispersion consistent with bifurcation values")


def check_near_wall_monotonicity(params: ModelParams) -> CheckReport:
    """Near-R regime: C2 > 0 decreasing, C1 increasing, L_n increasing."""
    near = replace(params, rho=params.R * 0.975)
    rep = near_wall_monotonicity(near, n_max=8)
    ok = rep.in_regime and rep.all_hold
    return _report("coefficient-monotonicity", ok,
                   {"C2_positive": rep.c2_positive,
                    "C2_decreasing": rep.c2_decreasing,
                    "C1_increasing": rep.c1_increasing,
                    "L_increasing": rep.l_increasing}, 0.0,
                   "coefficient monotonicity near the outer radius")


def check_low_mode_stability(params: ModelParams) -> CheckReport:
    """No positive growth root for n in {0, 1} with rho near R."""
    near = replace(params, rho=params.R * 0.975)
    st = radial_steady_state(near)
    roots = {n: growth_rate(n, near, st).a for n in (0, 1)}
    ok = all(a is None for a in roots.values())
    return _report("low-mode-stability", ok,
                   {f"root_n{n}": roots[n] for n in roots}, 0.0,
                   "modes 0 and 1 carry no instability")


def check_instability_existence(params: ModelParams) -> CheckReport:
    """For L in {1, 3, 15} some mode n in [2, 32] grows."""
    out = {}
    ok = True
    for L in (1.0, 3.0, 15.0):
        p = replace(params, L=L)
        st = radial_steady_state(p)
        found = None
        for n in range(2, 33):
            g = growth_rate(n, p, st)
            if g.unstable and abs(dispersion(g.a, n, p, st)) < 1e-10:
                found = (n, g.a)
                break
        ok = ok and found is not None
        out[f"L={L:g}"] = found
    return _report("instability-existence", ok, out, 1e-10,
                   "unstable mode exists at each sampled L")


def check_zero_L_edge(params: ModelParams) -> CheckReport:
    """L = 0: T = 0, h(0,n,0) = C1 > 0 for n >= 2 (instability persists)."""
    p0 = replace(params, L=0.0)
    t0 = clearance_t(p0)
    st = radial_steady_state(p0)
    h_vals = {n: dispersion(0.0, n, p0, st) for n in (2, 3, 4)}
    ok = abs(t0) < 1e-14 and all(v > 0 for v in h_vals.values())
    return _report("zero-L-edge", ok,
                   {"T": t0, **{f"h0_n{n}": v for n, v in h_vals.items()}},
                   1e-14, "instability persists at zero LDL intake")


def _field_error(params: ModelParams, m: int, n_r: int) -> float:
    curve = BoundaryCurve.circle(params.rho, m)
    g = PolarGrid(curve, params.R, n_r)
    st = radial_steady_state(params)
    M = solve_field(g, params, "M")
    P = solve_field(g, params, "P", m_values=M, T=st.T)
    m_exact = np.array([st.m(r) for r in g.r[0]])
    p_exact = np.array([st.p(r) for r in g.r[0]])
    return max(float(np.max(np.abs(M - m_exact[None, :]))),
               float(np.max(np.abs(P - p_exact[None, :]))))


def check_field_convergence(params: ModelParams, ladder) -> CheckReport:
    """Discrete radial solve converges to the closed form at order two."""
    errs = [_field_error(params, m, n_r) for (m, n_r) in ladder]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = all(1.8 <= o <= 2.2 for o in orders)
    return _report("field-convergence", ok,
                   {"errors": errs, "orders": orders}, 2.2,
                   "second-order field convergence")


def check_detection_shrinkage(params: ModelParams, ladder) -> CheckReport:
    """Detected mode-2 bifurcation error shrinks >= 3x per refinement."""
    L2 = bifurcation_point(replace(params, L=1.0), 2).L_n
    recs = detect_on_ladder(replace(params, L=1.0), ladder, 2,
                            (0.5 * L2, 1.3 * L2))
    errs = [abs(r.L_raw - L2) for r in recs]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = len(errs) == len(ladder) and all(r >= 3.0 for r in ratios)
    return _report("detection-shrinkage", ok,
                   {"errors": errs, "ratios": ratios}, 3.0,
                   "bifurcation detection errors shrink under refinement")


def check_symmetric_sign_flip(params: ModelParams,
                              n_r_levels=(8, 16)) -> CheckReport:
    """Symmetric-restriction lambda_max flips sign inside L in (100, 200)."""
    out = {}
    ok = True
    for n_r in n_r_levels:
        def lam_max(L):
            p = replace(params, L=float(L))
            prob = FreeBoundaryProblem(p, 1, n_r)
            sol = prob.solve_radial()
            A = prob.evolution_matrix(sol)
            return float(np.max(np.linalg.eigvals(A).real))

        lo, hi = lam_max(100.0), lam_max(200.0)
        flip_ok = lo < 0 < hi
        out[f"n_r={n_r}"] = {"at_100": lo, "at_200": hi}
        ok = ok and flip_ok
    return _report("symmetric-sign-flip", ok, out, 0.0,
                   "stability sign change of the symmetric restriction")


def check_kernel_identification(params: ModelParams, m: int,
                                n_r: int) -> CheckReport:
    """Near L_2 the Jacobian kernel is a pure mode-2 boundary deformation."""
    L2 = bifurcation_point(replace(params, L=1.0), 2).L_n
    prob = FreeBoundaryProblem(replace(params, L=L2), m, n_r)
    km = frechet_kernel_check(prob, modes=(2, 3))
    far = FreeBoundaryProblem(replace(params, L=0.5 * L2), m, n_r)
    km_far = frechet_kernel_check(far, modes=(2,))
    ok = (km.correlation(2) > 0.99 and km.correlation(3) < 1e-2
          and km_far.sigma_min > 10 * km.sigma_min)
    return _report("kernel-identification", ok,
                   {"corr2": km.correlation(2), "corr3": km.correlation(3),
                    "sigma_at_L2": km.sigma_min,
                    "sigma_far": km_far.sigma_min}, 0.99,
                   "one-dimensional mode-2 kernel at the first bifurcation")


# -- battery ------------------------------------------------------------


class _CorruptedStencil:
    """Context manager that corrupts the angular stencil (negative control)."""

    def __enter__(self):
        self._orig = grid_mod.stencil_from_arrays

        def bad(r, h):
            a1, z2, z3, a4, a5, a6, a7, a8, a9 = self._orig(r, h)
            return a1 * 1.05, z2, z3, a4, a5, a6, a7, a8, a9

        grid_mod.stencil_from_arrays = bad
        return self

    def __exit__(self, *exc):
        grid_mod.stencil_from_arrays = self._orig
        return False


def run_battery(params: ModelParams = DEFAULT_PARAMS, scale: str = "fast",
                corrupt_stencil: bool = False) -> list[CheckReport]:
    """Run every cross-module check; returns deterministic-ordered reports."""
    if scale == "fast":
        ladder = [(20, 2), (40, 4)]
        kernel_grid = (40, 8)
        flip_levels = (8, 16)
    elif scale == "full":
        ladder = [(20, 2), (40, 4), (80, 8), (160, 16)]
        kernel_grid = (80, 16)
        flip_levels = (8, 16, 32)
    else:
        raise ValueError("scale must be 'fast' or 'full'")

    checks = [
        ("clearance-positivity", lambda: check_clearance_positivity(params)),
        ("profile-positivity", lambda: check_profile_positivity(params)),
        ("bessel-wronskian", lambda: check_wronskian(params)),
        ("radial-pde-residual", lambda: check_radial_pde_residual(params)),
        ("degenerate-modes", lambda: check_degenerate_modes(params)),
        ("dispersion-identities",
         lambda: check_dispersion_at_bifurcation(params)),
        ("coefficient-monotonicity",
         lambda: check_near_wall_monotonicity(params)),
        ("low-mode-stability", lambda: check_low_mode_stability(params)),
        ("instability-existence",
         lambda: check_instability_existence(params)),
        ("zero-L-edge", lambda: check_zero_L_edge(params)),
        ("field-convergence",
         lambda: check_field_convergence(params, ladder)),
        ("detection-shrinkage",
         lambda: check_detection_shrinkage(params, ladder)),
        ("symmetric-sign-flip",
         lambda: check_symmetric_sign_flip(params, flip_levels)),
        ("kernel-identification",
         lambda: check_kernel_identification(params, *kernel_grid)),
    ]
    reports = []
    ctx = _CorruptedStencil() if corrupt_stencil else None
    if ctx is not None:
        ctx.__enter__()
    try:
        for name, fn in checks:
            try:
                reports.append(fn())
            except Exception as exc:  # report, never raise
                reports.append(CheckReport(name, False,
                                           {"error": repr(exc)}, 0.0,
                                           "check aborted"))
    finally:
        if ctx is not None:
            ctx.__exit__(None, None, None)
    return reports


def battery_to_json(reports: list[CheckReport], path):
    with open(path, "w") as f:
        json.dump([asdict(r) for r in reports], f, indent=2)


def all_passed(reports: list[CheckReport]) -> bool:
    return all(r.passed for r in reports)
