"""Continuation in L: radial-branch tracking, bifurcation detection,
branch switching, and pseudo-arclength continuation.

The radial branch keeps the reference inner radius fixed while the
clearance rate follows the radial steady-state relation T = T(L); the
discrete bifurcation values are located where a near-zero eigenvalue of
the steady-state Jacobian, classified by the angular mode of its
boundary block, changes sign.  Branch switching solves a bordered
system that pins the amplitude of the new mode and frees L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .radial import ModelParams
from .solver import (FreeBoundaryProblem, FreeBoundarySolution,
                     NewtonDivergenceError, boundary_mode, near_zero_eigs)

DETECTION_TOL = 1e-4
MIN_STEP = 1e-5


def projection(rho: np.ndarray, dtheta: float) -> float:
    """Scalar shape measure (rho_max - rho_min) * |theta_max - theta_min|.

    Extrema are taken at their first attainment in increasing theta;
    radially symmetric boundaries project to zero.
    """
    rho = np.asarray(rho, dtype=float)
    j_max = int(np.argmax(rho))
    j_min = int(np.argmin(rho))
    return float((rho[j_max] - rho[j_min]) * abs(j_max - j_min) * dtheta)


def _problem_at(base: ModelParams, L: float, m: int, n_r: int) -> FreeBoundaryProblem:
    return FreeBoundaryProblem(replace(base, L=L), m, n_r)


def mode_eigenvalues(problem: FreeBoundaryProblem, modes) -> dict:
    """Growth rate of each angular mode in ``modes`` on the radial branch,
    from the rotation-invariant mode blocks of the linearization."""
    sol = problem.solve_radial()
    out = {}
    for n in modes:
        try:
            out[n] = problem.mode_growth_rate(sol, n)
        except (ValueError, RuntimeError):
            out[n] = None
    return out


def mode_eigenvalue(problem: FreeBoundaryProblem, n: int) -> float | None:
    return mode_eigenvalues(problem, (n,))[n]


@dataclass(frozen=True)
class DetectedBifurcation:
    """Sign change of the mode-n Jacobian eigenvalue at L_tilde."""

    mode: int
    L_tilde: float
    smallest_eig_norm: float


@dataclass(frozen=True)
class BranchPoint:
    """One point on a solution branch."""

    L: float
    projection: float
    solution: FreeBoundarySolution

    @property
    def rho(self) -> np.ndarray:
        return self.solution.rho


def _steady_mode_metrics(problem: FreeBoundaryProblem, n: int):
    """(sign of det, smallest |eigenvalue|) of the mode-n steady block."""
    sol = problem.solve_radial()
    A = problem.mode_steady_block(sol, n)
    sign = float(np.linalg.slogdet(A)[0])
    lam = np.linalg.eigvals(A)
    return sign, float(np.min(np.abs(lam)))


def track_radial_branch(base: ModelParams, L_values, m: int, n_r: int,
                        modes=(2, 3, 4), tol: float = DETECTION_TOL):
    """Scan the radial branch over L_values, monitoring the steady-state
    Jacobian's mode blocks; each determinant sign change is localized by
    bisection until the smallest block eigenvalue falls below tol.

    Returns (points, detections): the radial BranchPoints at the scan
    values and the localized DetectedBifurcations in increasing L.
    """
    L_values = sorted(float(L) for L in L_values)
    points = []
    tracked = {n: [] for n in modes}
    dtheta = 2 * np.pi / m
    for L in L_values:
        prob = _problem_at(base, L, m, n_r)
        sol = prob.solve_radial()
        points.append(BranchPoint(L, projection(sol.rho, dtheta), sol))
        for n in modes:
            tracked[n].append(
                (L, _steady_mode_metrics_from(prob, sol, n)))
    detections = []
    for n in modes:
        pts = tracked[n]
        for (L0, (s0, _)), (L1, (s1, _)) in zip(pts, pts[1:]):
            if s0 * s1 < 0:
                det = _bisect_detection(base, n, L0, s0, L1, s1, m, n_r, tol)
                if det is not None:
                    detections.append(det)
    return points, sorted(detections, key=lambda d: d.L_tilde)


def _steady_mode_metrics_from(problem, sol, n):
    A = problem.mode_steady_block(sol, n)
    sign = float(np.linalg.slogdet(A)[0])
    lam = np.linalg.eigvals(A)
    return sign, float(np.min(np.abs(lam)))


def _bisect_detection(base, n, L0, s0, L1, s1, m, n_r, tol,
                      max_iter: int = 60) -> DetectedBifurcation | None:
    best = (math.nan, math.inf)
    for _ in range(max_iter):
        if best[1] < tol or (L1 - L0) < 4e-16 * max(1.0, abs(L1)):
            break
        Lm = 0.5 * (L0 + L1)
        sm, mag = _steady_mode_metrics(_problem_at(base, Lm, m, n_r), n)
        if mag < best[1]:
            best = (Lm, mag)
        if s0 * sm <= 0:
            L1, s1 = Lm, sm
        else:
            L0, s0 = Lm, sm
    if not math.isfinite(best[0]) or best[1] >= tol:
        return None
    return DetectedBifurcation(n, best[0], best[1])


@dataclass(frozen=True)
class LadderDetection:
    """Detection of one mode on one ladder level.

    ``L_raw`` is the bisected value on that grid; ``L_refined`` applies
    a two-term Richardson extrapolation over the three most recent
    ladder levels (equal to L_raw on the first two levels).
    """

    mode: int
    m: int
    n_r: int
    L_raw: float
    L_refined: float
    smallest_eig_norm: float


def _richardson2(x0: float, x1: float, x2: float) -> float:
    # Fit x(h) = X + c2 h^2 + c3 h^3 through three halvings of h; the
    # interior differences are second order and the one-sided boundary
    # corrections contribute the cubic term.
    c3 = (16.0 / 7.0) * (x0 - 5.0 * x1 + 4.0 * x2)
    c2 = (4.0 / 3.0) * ((x0 - x1) - (7.0 / 8.0) * c3)
    return x2 - c2 / 16.0 - c3 / 64.0


def detect_on_ladder(base: ModelParams, ladder, n: int, L_window,
                     scan_points: int = 7,
                     tol: float = DETECTION_TOL) -> list[LadderDetection]:
    """Locate the mode-n bifurcation on each ladder level (m, n_r).

    The per-level values converge at the discretization order; the
    refined column accelerates the sequence once three levels are
    available, which removes the two leading error terms.
    """
    lo, hi = L_window
    scan = list(np.linspace(lo, hi, scan_points))
    raws: list[LadderDetection] = []
    for (m, n_r) in ladder:
        _, dets = track_radial_branch(base, scan, m, n_r, modes=(n,),
                                      tol=tol)
        if not dets:
            continue
        d = dets[0]
        raws.append(LadderDetection(n, m, n_r, d.L_tilde, d.L_tilde,
                                    d.smallest_eig_norm))
    out = []
    for k, rec in enumerate(raws):
        if k >= 2:
            refined = _richardson2(raws[k - 2].L_raw, raws[k - 1].L_raw,
                                   rec.L_raw)
            rec = LadderDetection(rec.mode, rec.m, rec.n_r, rec.L_raw,
                                  refined, rec.smallest_eig_norm)
        out.append(rec)
    return out


def _kernel_direction(problem: FreeBoundaryProblem, n: int) -> np.ndarray:
    """Unit null-ish vector of the steady Jacobian with mode-n boundary block."""
    sol = problem.solve_radial()
    J = problem.jacobian(sol.pack())
    vals, vecs = near_zero_eigs(J, k=min(10, problem.n_unknowns - 2))
    for lam, vec in zip(vals, vecs.T):
        v = np.real(vec)
        rho_block = v[2 * problem.n_field:]
        if np.linalg.norm(rho_block) > 1e-10 and boundary_mode(rho_block) == n:
            return v / np.linalg.norm(v)
    raise NewtonDivergenceError(f"no mode-{n} kernel direction found")


def _dF_dL(base: ModelParams, L: float, m: int, n_r: int,
           x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    rp = _problem_at(base, L + step, m, n_r).residual(x)
    rm = _problem_at(base, L - step, m, n_r).residual(x)
    return (rp - rm) / (2 * step)


def _bordered_newton(base: ModelParams, m: int, n_r: int,
                     x: np.ndarray, L: float,
                     constraint_row: np.ndarray, constraint_rhs: float,
                     constraint_L: float = 0.0,
                     tol: float = 1e-9, max_iter: int = 30):
    """Newton on [F(x; L); c . x + c_L L - rhs] = 0 with unknowns (x, L)."""
    x = x.copy()
    norm = math.inf
    for _ in range(max_iter):
        prob = _problem_at(base, L, m, n_r)
        res = prob.residual(x)
        g = float(constraint_row @ x + constraint_L * L - constraint_rhs)
        norm = max(np.max(np.abs(res)), abs(g))
        if norm < tol:
            return x, L, prob
        J = prob.jacobian(x, res)
        fL = _dF_dL(base, L, m, n_r, x)
        n_tot = prob.n_unknowns
        B = sparse.bmat(
            [[J, sparse.csc_matrix(fL[:, None])],
             [sparse.csc_matrix(constraint_row[None, :]),
              sparse.csc_matrix(np.array([[constraint_L]]))]],
            format="csc")
        step = splu(B).solve(np.concatenate([res, [g]]))
        x = x - step[:n_tot]
        L = L - step[n_tot]
    raise NewtonDivergenceError(
        f"bordered Newton stalled (residual {norm:.3e})", norm)


def tangent_cone_switch(base: ModelParams, detection: DetectedBifurcation,
                        m: int, n_r: int,
                        amplitude: float | None = None,
                        max_doublings: int = 3) -> BranchPoint:
    """Step onto the bifurcating branch at a detected bifurcation.

    Perturbs the radial state along the kernel direction by the given
    amplitude, then pins the component of the boundary block along that
    direction and frees L; on failure the amplitude is doubled up to
    ``max_doublings`` times.
    """
    n = detection.mode
    L0 = detection.L_tilde
    prob0 = _problem_at(base, L0, m, n_r)
    sol0 = prob0.solve_radial()
    x0 = sol0.pack()
    v = _kernel_direction(prob0, n)
    rho_norm = np.linalg.norm(v[2 * prob0.n_field:])
    if rho_norm < 1e-12:
        raise NewtonDivergenceError("kernel direction has no boundary content")
    v = v / rho_norm  # now the boundary block of v is a unit vector
    c = np.zeros_like(x0)
    c[2 * prob0.n_field:] = v[2 * prob0.n_field:]
    if amplitude is None:
        amplitude = 1e-2 * float(np.mean(sol0.rho))
    last_exc = None
    for _ in range(max_doublings + 1):
        x_init = x0 + amplitude * v
        rhs = float(c @ x0) + amplitude
        try:
            x, L, prob = _bordered_newton(base, m, n_r, x_init, L0, c, rhs)
        except (NewtonDivergenceError, RuntimeError) as exc:
            last_exc = exc
            amplitude *= 2.0
            continue
        M, P, rho = prob.unpack(x)
        sol = FreeBoundarySolution(prob.params, prob.T, prob.R, n_r,
                                   rho.copy(), M.copy(), P.copy(),
                                   float(np.max(np.abs(prob.residual(x)))))
        return BranchPoint(L, projection(rho, prob.dtheta), sol)
    raise NewtonDivergenceError(
        f"branch switch failed after {max_doublings} amplitude doublings: "
        f"{last_exc}")


def continue_branch(base: ModelParams, start: BranchPoint, m: int, n_r: int,
                    n_steps: int = 10, ds: float = 0.5,
                    min_step: float = MIN_STEP) -> list[BranchPoint]:
    """Pseudo-arclength continuation from a branch point.

    The corrector is a bordered Newton with a secant tangent
    constraint; the step halves on failure down to ``min_step``.
    """
    points = [start]
    x_prev = start.solution.pack()
    L_prev = start.L
    # initial tangent: lean on the symmetry-breaking direction by moving
    # the amplitude further while letting L adjust
    prob0 = _problem_at(base, L_prev, m, n_r)
    radial = prob0.solve_radial().pack()
    t_x = x_prev - radial
    t_norm = math.hypot(np.linalg.norm(t_x), 0.0)
    if t_norm < 1e-14:
        raise ValueError("start point is radially symmetric")
    t_x /= t_norm
    t_L = 0.0
    while len(points) <= n_steps:
        step = ds
        while True:
            x_pred = x_prev + step * t_x
            L_pred = L_prev + step * t_L
            rhs = float(t_x @ x_prev) + t_L * L_prev + step
            try:
                x_new, L_new, prob = _bordered_newton(
                    base, m, n_r, x_pred, L_pred, t_x, rhs,
                    constraint_L=t_L)
                break
            except (NewtonDivergenceError, RuntimeError):
                step *= 0.5
                if step < min_step:
                    return points
        M, P, rho = prob.unpack(x_new)
        sol = FreeBoundarySolution(prob.params, prob.T, prob.R, n_r,
                                   rho.copy(), M.copy(), P.copy(),
                                   float(np.max(np.abs(prob.residual(x_new)))))
        points.append(BranchPoint(L_new, projection(rho, prob.dtheta), sol))
        d_x = x_new - x_prev
        d_L = L_new - L_prev
        norm = math.hypot(np.linalg.norm(d_x), abs(d_L))
        t_x, t_L = d_x / norm, d_L / norm
        x_prev, L_prev = x_new, L_new
    return points


def mode_purity(rho: np.ndarray, n: int) -> float:
    """Energy fraction of mode n among the nonzero angular modes."""
    spec = np.abs(np.fft.rfft(np.asarray(rho) - np.mean(rho)))**2
    total = float(np.sum(spec[1:]))
    if total == 0:
        return 0.0
    return float(spec[n] / total)


def diagram_to_csv(branches: dict, path, comment: str = ""):
    """Write branches {branch_id: [BranchPoint, ...]} as CSV."""
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write("branch_id,L,projection\n")
        for bid, pts in branches.items():
            for pt in pts:
                f.write(f"{bid},{pt.L:.17g},{pt.projection:.17g}\n")


def detections_to_csv(detections, path, comment: str = ""):
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write("mode,L_tilde,smallest_eig_norm\n")
        for d in detections:
            f.write(f"{d.mode},{d.L_tilde:.17g},{d.smallest_eig_norm:.17g}\n")
