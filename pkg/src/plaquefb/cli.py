"""Command-line driver.

Subcommands reproduce the model's reference tables and figure inputs as
machine-readable CSV: ``converge`` (field-error ladder), ``bifurcate``
(analytic vs. numeric bifurcation values per grid level), ``stability``
(spectrum extremes per L), ``branch`` (bifurcation-diagram data plus
snapshots), ``steady`` (one steady-state solve).  Parameters come from a
key=value config file, overridable by flags.

Exit codes: 0 full success, 2 partial results, 1 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from .branch import (continue_branch, detect_on_ladder, detections_to_csv,
                     mode_purity, tangent_cone_switch, track_radial_branch)
from .grid import BoundaryCurve, PolarGrid, boundary_to_csv, field_to_csv, solve_field
from .modes import bifurcation_point
from .radial import ModelParams, radial_steady_state
from .solver import FreeBoundaryProblem, solution_to_csv

DEFAULT_LADDER = [(20, 2), (40, 4), (80, 8), (160, 16)]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


class ConfigError(ValueError):
    pass


def _atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path) -> dict:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return cp


def _params_from(cp) -> ModelParams:
    try:
        sec = cp["model"]
        return ModelParams(D=sec.getfloat("D", 1.0),
                           H=sec.getfloat("H", 3.0),
                           L=sec.getfloat("L", 3.0),
                           gamma=sec.getfloat("gamma", 2.0),
                           R=sec.getfloat("R", 2.0),
                           rho=sec.getfloat("rho", 1.6))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [model] section: {exc}") from exc


def _ladder_from(cp) -> list[tuple[int, int]]:
    if not cp.has_option("grid", "ladder"):
        return list(DEFAULT_LADDER)
    out = []
    for item in cp.get("grid", "ladder").split(";"):
        m_s, nr_s = item.split(",")
        out.append((int(m_s), int(nr_s)))
    if len(out) >= 2:
        for (m0, n0), (m1, n1) in zip(out, out[1:]):
            if m1 <= m0 or n1 <= n0:
                raise ConfigError("ladder must be strictly refining")
    return out


def _grid_from(cp, args) -> tuple[int, int]:
    if args.grid:
        m_s, nr_s = args.grid.split(",")
        return int(m_s), int(nr_s)
    if cp.has_section("grid"):
        return (cp["grid"].getint("m", 80), cp["grid"].getint("n_r", 8))
    return (80, 8)


def _floats(cp, section, key, default):
    if cp.has_option(section, key):
        return [float(v) for v in cp.get(section, key).split(",")]
    return list(default)


def _ints(cp, section, key, default):
    if cp.has_option(section, key):
        return [int(v) for v in cp.get(section, key).split(",")]
    return list(default)


def _comment(params: ModelParams, extra: str = "") -> str:
    base = (f"D={params.D:g} H={params.H:g} L={params.L:g} "
            f"gamma={params.gamma:g} R={params.R:g} rho={params.rho:g}")
    return f"{base} {extra}".strip()


# -- subcommands --------------------------------------------------------


def cmd_converge(cp, args) -> int:
    params = _params_from(cp)
    ladder = _ladder_from(cp)
    if len(ladder) < 2:
        print("converge: need at least two ladder levels", file=sys.stderr)
        return EXIT_CONFIG
    st = radial_steady_state(params)
    rows, errs = [], []
    failed = False
    for (m, n_r) in ladder:
        try:
            curve = BoundaryCurve.circle(params.rho, m)
            g = PolarGrid(curve, params.R, n_r)
            M = solve_field(g, params, "M")
            P = solve_field(g, params, "P", m_values=M, T=st.T)
            m_exact = np.array([st.m(r) for r in g.r[0]])
            p_exact = np.array([st.p(r) for r in g.r[0]])
            err = max(float(np.max(np.abs(M - m_exact[None, :]))),
                      float(np.max(np.abs(P - p_exact[None, :]))))
        except Exception as exc:
            print(f"converge: level ({m},{n_r}) failed: {exc}",
                  file=sys.stderr)
            failed = True
            break
        errs.append(err)
        order = (math.log2(errs[-2] / errs[-1]) if len(errs) >= 2
                 else float("nan"))
        h = (params.R - params.rho) / n_r
        rows.append(f"{h:.17g},{2 * math.pi / m:.17g},{err:.17g},{order:.17g}")
    text = (f"# {_comment(params, 'ladder=' + str(ladder))}\n"
            "h,dtheta,err,order\n" + "\n".join(rows) + "\n")
    _atomic_write(os.path.join(args.out, "converge.csv"), text)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_bifurcate(cp, args) -> int:
    params = _params_from(cp)
    ladder = _ladder_from(cp)
    modes = _ints(cp, "bifurcate", "modes", (2, 3, 4))
    rows = []
    missing = False
    for n in modes:
        L_n = bifurcation_point(params, n).L_n
        window = (0.5 * L_n, 1.3 * L_n)
        recs = detect_on_ladder(params, ladder, n, window)
        seen = {(r.m, r.n_r): r for r in recs}
        for (m, n_r) in ladder:
            rec = seen.get((m, n_r))
            if rec is None:
                rows.append(f"{n},{L_n:.17g},,")
                missing = True
            else:
                rows.append(f"{n},{L_n:.17g},{rec.L_refined:.17g},"
                            f"{abs(rec.L_refined - L_n):.17g}")
    text = (f"# {_comment(params, 'ladder=' + str(ladder))}\n"
            "n,L_analytic,L_numeric,abs_err\n" + "\n".join(rows) + "\n")
    _atomic_write(os.path.join(args.out, "bifurcate.csv"), text)
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_stability(cp, args) -> int:
    params = _params_from(cp)
    m, n_r = _grid_from(cp, args)
    L_list = _floats(cp, "stability", "L", (0.0, 3.0, 15.0, 120.0, 200.0))
    restriction = (cp.get("stability", "restriction", fallback="full")
                   if cp.has_section("stability") else "full")
    rows = []
    failed = False
    for L in L_list:
        p = replace(params, L=L)
        try:
            if restriction == "radial":
                prob = FreeBoundaryProblem(p, 1, n_r)
            else:
                prob = FreeBoundaryProblem(p, m, n_r)
            sol = prob.solve_radial()
            spec = prob.linearized_spectrum(sol, restriction="full")
            rows.append(f"{L:.17g},{spec.lambda_max.real:.17g},{restriction}")
        except Exception as exc:
            print(f"stability: L={L} failed: {exc}", file=sys.stderr)
            rows.append(f"{L:.17g},,{restriction}")
            failed = True
    text = (f"# {_comment(params, f'm={m} n_r={n_r}')}\n"
            "L,re_lambda_max,restriction\n" + "\n".join(rows) + "\n")
    _atomic_write(os.path.join(args.out, "stability.csv"), text)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_branch(cp, args) -> int:
    params = _params_from(cp)
    m, n_r = _grid_from(cp, args)
    modes = _ints(cp, "branch", "modes", (2,))
    n_steps = (cp["branch"].getint("steps", 10)
               if cp.has_section("branch") else 10)
    detections = []
    branches = {}
    failed = False
    # radial branch rows (projection identically zero)
    scan = _floats(cp, "branch", "radial_L", (1.0, 3.0, 5.0))
    pts, _ = track_radial_branch(params, scan, m, n_r, modes=())
    diagram_rows = [f"radial,{pt.L:.17g},{pt.projection:.17g}," for pt in pts]
    for n in modes:
        L_n = bifurcation_point(params, n).L_n
        recs = detect_on_ladder(params, [(m, n_r)], n,
                                (0.5 * L_n, 1.3 * L_n))
        if not recs:
            print(f"branch: no mode-{n} detection", file=sys.stderr)
            failed = True
            continue
        from .branch import DetectedBifurcation
        det = DetectedBifurcation(n, recs[0].L_raw,
                                  recs[0].smallest_eig_norm)
        detections.append(det)
        try:
            start = tangent_cone_switch(params, det, m, n_r)
            pts = continue_branch(params, start, m, n_r, n_steps=n_steps)
        except Exception as exc:
            print(f"branch: mode {n} failed: {exc}", file=sys.stderr)
            failed = True
            continue
        branches[f"n{n}"] = pts
        prob = FreeBoundaryProblem(replace(params, L=pts[-1].L), m, n_r)
        lam = prob.linearized_spectrum(pts[-1].solution).lambda_max
        for pt in pts:
            diagram_rows.append(f"n{n},{pt.L:.17g},{pt.projection:.17g},")
        diagram_rows.append(
            f"n{n}-endpoint,{pts[-1].L:.17g},{pts[-1].projection:.17g},"
            f"{lam.real:.17g}")
        solution_to_csv(pts[-1].solution,
                        os.path.join(args.out, f"branch_n{n}"),
                        _comment(pts[-1].solution.params,
                                 f"m={m} n_r={n_r} "
                                 f"purity={mode_purity(pts[-1].rho, n):.4f}"))
    text = (f"# {_comment(params, f'm={m} n_r={n_r}')}\n"
            "branch_id,L,projection,re_lambda_max\n"
            + "\n".join(diagram_rows) + "\n")
    _atomic_write(os.path.join(args.out, "diagram.csv"), text)
    detections_to_csv(detections, os.path.join(args.out, "detections.csv"),
                      _comment(params, f"m={m} n_r={n_r}"))
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_steady(cp, args) -> int:
    params = _params_from(cp)
    m, n_r = _grid_from(cp, args)
    prob = FreeBoundaryProblem(params, m, n_r)
    sol = prob.solve_radial()
    grid = PolarGrid(sol.curve, params.R, n_r)
    comment = _comment(params, f"m={m} n_r={n_r}")
    field_to_csv(grid, sol.m_field, os.path.join(args.out, "steady_m.csv"),
                 comment)
    field_to_csv(grid, sol.p_field, os.path.join(args.out, "steady_p.csv"),
                 comment)
    boundary_to_csv(grid, os.path.join(args.out, "steady_boundary.csv"),
                    comment)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plaquefb",
        description="Free-boundary plaque model: tables and diagrams as CSV")
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--grid", default=None, help="m,n_r override")
    ap.add_argument("--tol", type=float, default=1e-9,
                    help="nonlinear solver tolerance")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("converge", "bifurcate", "stability", "branch", "steady"):
        sub.add_parser(name)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.tol <= 0:
        print("tolerance must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cp = load_config(args.config)
        _params_from(cp)  # validate early
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    handler = {"converge": cmd_converge, "bifurcate": cmd_bifurcate,
               "stability": cmd_stability, "branch": cmd_branch,
               "steady": cmd_steady}[args.command]
    try:
        return handler(cp, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
