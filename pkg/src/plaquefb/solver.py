"""Nonlinear steady-state solver for the full free-boundary system.

Unknowns are the nodal macrophage field M, the nodal pressure field P,
and the free-boundary radii rho(theta_j), stacked ray-major as
[M, P, rho].  The residual stacks the discrete M equation, the discrete
P equation, and one free-boundary row per ray (the normal derivative of
P on the inner boundary, which is the boundary velocity).

The Jacobian is assembled by compressed (colored) finite differences.
The linearized time-dependent operator is obtained from the same
Jacobian by eliminating the algebraic rows (pressure and boundary
conditions) against the differential ones (interior M and rho), with
the grid-advection coupling of the body-fitted nodes retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, eigs

from .grid import (BoundaryCurve, InvalidGeometryError, curvature_of,
                   periodic_deriv, periodic_second_deriv,
                   stencil_from_arrays)
from .radial import ModelParams, clearance_t, radial_steady_state

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50
FD_STEP = 1e-7


class NewtonDivergenceError(RuntimeError):
    """Newton iteration failed to converge."""

    def __init__(self, message, residual_norm=math.nan):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class FreeBoundarySolution:
    """Converged steady state of the free-boundary system."""

    params: ModelParams
    T: float
    R: float
    n_r: int
    rho: np.ndarray
    m_field: np.ndarray
    p_field: np.ndarray
    residual_norm: float

    @property
    def m(self) -> int:
        return len(self.rho)

    @property
    def curve(self) -> BoundaryCurve:
        return BoundaryCurve(self.rho)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.m_field.ravel(), self.p_field.ravel(),
                               self.rho])


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a linearized evolution operator, descending real part."""

    eigenvalues: np.ndarray
    grid: tuple[int, int]
    restriction: str

    @property
    def lambda_max(self) -> complex:
        return complex(self.eigenvalues[0])

    def to_csv(self, path, comment: str = ""):
        with open(path, "w") as f:
            if comment:
                f.write(f"# {comment}\n")
            f.write("index,re,im\n")
            for k, lam in enumerate(self.eigenvalues):
                f.write(f"{k},{lam.real:.17g},{lam.imag:.17g}\n")


def _divisor_coloring(m: int, gap: int) -> np.ndarray:
    """Cyclic coloring of range(m) with same-color distance >= gap."""
    if m <= gap:
        return np.arange(m)
    g = gap
    while m % g:
        g += 1
    return np.arange(m) % g


class FreeBoundaryProblem:
    """Discrete free-boundary system at fixed parameters and grid."""

    def __init__(self, params: ModelParams, m: int, n_r: int,
                 T: float | None = None):
        self.params = params
        self.m = int(m)
        self.n_r = int(n_r)
        self.R = params.R
        self.T = clearance_t(params) if T is None else float(T)
        self.dtheta = 2 * np.pi / self.m
        self.n_field = self.m * (self.n_r + 1)
        self.n_unknowns = 2 * self.n_field + self.m
        self._coloring = None

    # -- packing ---------------------------------------------------------

    def unpack(self, x: np.ndarray):
        nf, n_r = self.n_field, self.n_r
        M = x[:nf].reshape(self.m, n_r + 1)
        P = x[nf:2 * nf].reshape(self.m, n_r + 1)
        rho = x[2 * nf:]
        return M, P, rho

    def pack(self, M, P, rho) -> np.ndarray:
        return np.concatenate([np.ravel(M), np.ravel(P), np.asarray(rho)])

    # -- residual --------------------------------------------------------

    def residual(self, x: np.ndarray) -> np.ndarray:
        p, T, R, n_r, dth = self.params, self.T, self.R, self.n_r, self.dtheta
        M, P, rho = self.unpack(x)
        if np.any(rho >= R) or np.any(rho <= 0):
            raise InvalidGeometryError("free boundary left (0, R)")
        h = (R - rho) / n_r
        r = rho[:, None] + np.arange(n_r + 1)[None, :] * h[:, None]
        a1, _, _, a4, a5, a6, a7, a8, a9 = stencil_from_arrays(r, h)

        def lap(F):
            hh = h[:, None]
            Fp = np.roll(F, -1, axis=0)
            Fm = np.roll(F, 1, axis=0)
            sl = np.s_[:, 1:-1]
            d_tt = (a1[sl] * F[sl]
                    + a4[sl] * Fp[sl] + a5[sl] * Fp[:, 2:] + a6[sl] * Fp[:, :-2]
                    + a7[sl] * Fm[sl] + a8[sl] * Fm[:, 2:] + a9[sl] * Fm[:, :-2]
                    ) / dth**2
            return ((F[:, 2:] - 2 * F[sl] + F[:, :-2]) / hh**2
                    + (F[:, 2:] - F[:, :-2]) / (2 * hh) / r[sl]
                    + d_tt / r[sl]**2)

        def outer_row(F, alpha):
            # PDE Laplacian at r = R with ghost from F_r(R) = -alpha F(R)
            d_tt = (np.roll(F[:, -1], -1) - 2 * F[:, -1]
                    + np.roll(F[:, -1], 1)) / dth**2
            return (2 * (F[:, -2] - F[:, -1]) / h**2
                    - 2 * alpha * F[:, -1] / h - alpha * F[:, -1] / R
                    + d_tt / R**2)

        res_m = np.empty_like(M)
        res_m[:, 0] = M[:, 0] - 1.0
        res_m[:, 1:-1] = p.D * lap(M) - p.H * M[:, 1:-1]
        res_m[:, -1] = p.D * outer_row(M, 1.0) - p.H * M[:, -1]

        res_p = np.empty_like(P)
        res_p[:, 0] = P[:, 0] - p.gamma * curvature_of(rho, dth)
        res_p[:, 1:-1] = lap(P) + p.L * M[:, 1:-1] - T
        res_p[:, -1] = outer_row(P, 0.0) + p.L * M[:, -1] - T

        # Free-boundary rows: P_r at i = 0 from the PDE with a ghost node
        # (compact and second order with a small constant); one-sided
        # estimates enter only the curve-following correction terms,
        # which vanish to first order around radial states.
        rho_t = periodic_deriv(rho, dth)
        rho_tt = periodic_second_deriv(rho, dth)
        p_r_os = (-3 * P[:, 0] + 4 * P[:, 1] - P[:, 2]) / (2 * h)
        p_rr_os = (P[:, 0] - 2 * P[:, 1] + P[:, 2]) / h**2
        p_rt_os = periodic_deriv(p_r_os, dth)
        d2_curve = periodic_second_deriv(P[:, 0], dth)
        p_tt = (d2_curve - 2 * p_rt_os * rho_t - p_rr_os * rho_t**2
                - p_r_os * rho_tt)
        source = T - p.L * M[:, 0]
        p_r = ((source - p_tt / rho**2 - 2 * (P[:, 1] - P[:, 0]) / h**2)
               / (1.0 / rho - 2.0 / h))
        p_theta = periodic_deriv(P[:, 0], dth) - p_r * rho_t
        res_rho = -(p_r - rho_t * p_theta / rho**2)

        return self.pack(res_m, res_p, res_rho)

    # -- initial guesses -------------------------------------------------

    def radial_guess(self) -> np.ndarray:
        """Closed-form radial steady state sampled on the symmetric grid."""
        st = radial_steady_state(self.params)
        rho = np.full(self.m, self.params.rho)
        h = (self.R - self.params.rho) / self.n_r
        rvec = self.params.rho + np.arange(self.n_r + 1) * h
        M = np.tile([st.m(r) for r in rvec], (self.m, 1))
        P = np.tile([st.p(r) for r in rvec], (self.m, 1))
        return self.pack(M, P, rho)

    # -- Jacobian by compressed finite differences -----------------------

    def _node_index(self, field_offset, i, j):
        return field_offset + (j % self.m) * (self.n_r + 1) + i

    def _build_coloring(self):
        m, n_r, nf = self.m, self.n_r, self.n_field
        col_m = _divisor_coloring(m, 5)
        col_p = _divisor_coloring(m, 5)
        groups: dict[tuple, list[int]] = {}
        rows_of: dict[int, np.ndarray] = {}
        i_all = np.arange(n_r + 1)

        def field_rows(i, j, j_span, include_rho):
            i_lo, i_hi = max(i - 2, 0), min(i + 2, n_r)
            ii = np.arange(i_lo, i_hi + 1)
            out = []
            for dj in range(-j_span, j_span + 1):
                base = ((j + dj) % m) * (n_r + 1)
                out.append(base + ii)            # M rows
                out.append(nf + base + ii)       # P rows
            if include_rho:
                for dj in range(-2, 3):
                    out.append(np.array([2 * nf + (j + dj) % m]))
            return np.unique(np.concatenate(out))

        for j in range(m):
            for i in range(n_r + 1):
                c = ("M", i % 5, col_m[j])
                idx = self._node_index(0, i, j)
                groups.setdefault(c, []).append(idx)
                rows_of[idx] = field_rows(i, j, 1, include_rho=(i <= 2))
                c = ("P", i % 5, col_p[j])
                idx = self._node_index(nf, i, j)
                groups.setdefault(c, []).append(idx)
                rows_of[idx] = field_rows(i, j, 1, include_rho=(i <= 2))
            c = ("rho", col_p[j])
            idx = 2 * nf + j
            groups.setdefault(c, []).append(idx)
            blocks = []
            for dj in range(-2, 3):
                base = ((j + dj) % m) * (n_r + 1)
                blocks.append(base + i_all)
                blocks.append(nf + base + i_all)
                blocks.append(np.array([2 * nf + (j + dj) % m]))
            rows_of[idx] = np.unique(np.concatenate(blocks))
        self._coloring = (list(groups.values()), rows_of)

    def jacobian(self, x: np.ndarray, r0: np.ndarray | None = None):
        """Sparse Jacobian of the residual at x."""
        if self._coloring is None:
            self._build_coloring()
        groups, rows_of = self._coloring
        if r0 is None:
            r0 = self.residual(x)
        rows, cols, vals = [], [], []
        for cols_in_color in groups:
            xp = x.copy()
            eps = FD_STEP * np.maximum(1.0, np.abs(x[cols_in_color]))
            xp[cols_in_color] += eps
            diff = self.residual(xp) - r0
            for c, e in zip(cols_in_color, eps):
                rws = rows_of[c]
                rows.append(rws)
                cols.append(np.full(len(rws), c))
                vals.append(diff[rws] / e)
        return sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_unknowns, self.n_unknowns))

    # -- Newton ----------------------------------------------------------

    def newton(self, x0: np.ndarray, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> FreeBoundarySolution:
        x = np.asarray(x0, dtype=float).copy()
        res = self.residual(x)
        norm = np.max(np.abs(res))
        for _ in range(max_iter):
            if norm < tol:
                break
            J = self.jacobian(x, res)
            try:
                lu = splu(J)
            except RuntimeError as exc:
                raise NewtonDivergenceError(
                    f"singular Jacobian (residual {norm:.3e}): {exc}",
                    norm) from exc
            step = lu.solve(res)
            lam = 1.0
            for _ in range(10):
                try:
                    res_new = self.residual(x - lam * step)
                except InvalidGeometryError:
                    lam *= 0.5
                    continue
                norm_new = np.max(np.abs(res_new))
                if norm_new < norm or norm < tol:
                    break
                lam *= 0.5
            else:
                raise NewtonDivergenceError(
                    f"line search stalled at residual {norm:.3e}", norm)
            x = x - lam * step
            res, norm = res_new, norm_new
        else:
            if norm >= tol:
                raise NewtonDivergenceError(
                    f"no convergence in {max_iter} iterations "
                    f"(residual {norm:.3e})", norm)
        M, P, rho = self.unpack(x)
        return FreeBoundarySolution(self.params, self.T, self.R, self.n_r,
                                    rho.copy(), M.copy(), P.copy(), norm)

    def solve_radial(self, tol: float = DEFAULT_TOL) -> FreeBoundarySolution:
        return self.newton(self.radial_guess(), tol=tol)

    # -- linearized evolution operator -----------------------------------

    def _row_partition(self):
        """Differential rows (interior/outer M, rho) vs algebraic rows."""
        m, n_r, nf = self.m, self.n_r, self.n_field
        diff = []
        for j in range(m):
            base = j * (n_r + 1)
            diff.extend(range(base + 1, base + n_r + 1))
        diff.extend(range(2 * nf, 2 * nf + m))
        diff = np.array(diff)
        mask = np.ones(self.n_unknowns, dtype=bool)
        mask[diff] = False
        return diff, np.nonzero(mask)[0]

    def evolution_matrix(self, solution: FreeBoundarySolution) -> np.ndarray:
        """Dense reduced operator governing d/dt of (interior M, rho).

        Algebraic rows (pressure, boundary conditions) are eliminated by
        a Schur complement; the advection of body-fitted M nodes by the
        moving boundary is folded in.
        """
        x = solution.pack()
        J = self.jacobian(x).tocsc()
        d_idx, a_idx = self._row_partition()
        Add = J[np.ix_(d_idx, d_idx)].toarray()
        Adz = J[np.ix_(d_idx, a_idx)]
        Aad = J[np.ix_(a_idx, d_idx)]
        Aaz = J[np.ix_(a_idx, a_idx)].tocsc()
        lu = splu(Aaz)
        corr = Adz @ lu.solve(Aad.toarray())
        Jd = Add - corr

        # grid-advection: d/dt M_node = M_t + M_r (1 - i/n_r) rho_t
        m, n_r = self.m, self.n_r
        n_mrows = m * n_r
        B = np.zeros((len(d_idx), len(d_idx)))
        M = solution.m_field
        h = (self.R - solution.rho) / n_r
        for j in range(m):
            for k, i in enumerate(range(1, n_r + 1)):
                if i == n_r:
                    m_r = -M[j, n_r]  # Robin condition, exact
                else:
                    m_r = (M[j, i + 1] - M[j, i - 1]) / (2 * h[j])
                B[j * n_r + k, n_mrows + j] = m_r * (1 - i / n_r)
        # E x' = Jd x with E = I - B  =>  x' = (I + B) Jd x (B is nilpotent)
        return Jd + B @ Jd

    def mode_steady_block(self, solution: FreeBoundarySolution,
                          n: int) -> np.ndarray:
        """Steady-state Jacobian restricted to angular mode n.

        Valid for radially symmetric solutions, where the linearization
        commutes with rotations: the cosine-mode subspace
        span{e_i cos(n theta), rho-block cos(n theta)} is invariant and
        the projected block is exact up to finite-difference noise.
        Singular exactly at the discrete bifurcation values of mode n.
        """
        m, n_r, nf = self.m, self.n_r, self.n_field
        if not 0 <= n <= m // 2:
            raise ValueError("mode index must be in [0, m/2]")
        theta = np.arange(m) * self.dtheta
        c = np.cos(n * theta)
        norm2 = float(c @ c)
        K = 2 * (n_r + 1) + 1
        B = np.zeros((self.n_unknowns, K))
        for k, offset in enumerate((0, nf)):
            for i in range(n_r + 1):
                B[offset + np.arange(m) * (n_r + 1) + i,
                  k * (n_r + 1) + i] = c
        B[2 * nf:, K - 1] = c
        J = self.jacobian(solution.pack())
        return (B.T @ (J @ B)) / norm2

    def mode_evolution_matrix(self, solution: FreeBoundarySolution,
                              n: int) -> np.ndarray:
        """Reduced evolution operator restricted to angular mode n
        (mode block of the steady Jacobian with the algebraic rows
        eliminated and the grid-advection coupling folded in)."""
        n_r = self.n_r
        K = 2 * (n_r + 1) + 1
        A = self.mode_steady_block(solution, n)

        d_idx = np.concatenate([np.arange(1, n_r + 1), [K - 1]])
        a_idx = np.concatenate([[0], np.arange(n_r + 1, 2 * (n_r + 1))])
        Add = A[np.ix_(d_idx, d_idx)]
        Adz = A[np.ix_(d_idx, a_idx)]
        Aad = A[np.ix_(a_idx, d_idx)]
        Aaz = A[np.ix_(a_idx, a_idx)]
        Jd = Add - Adz @ np.linalg.solve(Aaz, Aad)
        coup = np.zeros((len(d_idx), len(d_idx)))
        M = solution.m_field
        h = (self.R - solution.rho[0]) / n_r
        for k, i in enumerate(range(1, n_r + 1)):
            if i == n_r:
                m_r = -M[0, n_r]
            else:
                m_r = (M[0, i + 1] - M[0, i - 1]) / (2 * h)
            coup[k, n_r] = m_r * (1 - i / n_r)
        return Jd + coup @ Jd

    def mode_growth_rate(self, solution: FreeBoundarySolution,
                         n: int) -> float:
        """Largest real part in the mode-n block (the mode growth rate)."""
        lam = np.linalg.eigvals(self.mode_evolution_matrix(solution, n))
        return float(np.max(lam.real))

    def linearized_spectrum(self, solution: FreeBoundarySolution,
                            restriction: str = "full") -> Spectrum:
        """Eigenvalues of the linearized evolution operator.

        restriction = "full" uses this problem's grid; "radial" projects
        onto theta-independent perturbations by running the one-ray
        reduction of the same system.
        """
        if restriction == "radial":
            prob = _radial_restriction(self)
            sol = prob.solve_radial()
            A = prob.evolution_matrix(sol)
            grid_desc = (1, self.n_r)
        elif restriction == "full":
            A = self.evolution_matrix(solution)
            grid_desc = (self.m, self.n_r)
        else:
            raise ValueError("restriction must be 'full' or 'radial'")
        lam = np.linalg.eigvals(A)
        order = np.argsort(-lam.real)
        return Spectrum(lam[order], grid_desc, restriction)


def _radial_restriction(problem: FreeBoundaryProblem) -> FreeBoundaryProblem:
    """One-ray (theta-independent) version of the same discrete system."""
    return FreeBoundaryProblem(problem.params, 1, problem.n_r, T=problem.T)


def radial_restriction_problem(params: ModelParams, n_r: int,
                               T: float | None = None) -> FreeBoundaryProblem:
    return FreeBoundaryProblem(params, 1, n_r, T=T)


@dataclass(frozen=True)
class KernelMetrics:
    """Near-kernel diagnostics of the steady-state Jacobian."""

    sigma_min: float
    kernel_rho: np.ndarray
    mode_correlations: dict = field(default_factory=dict)

    def correlation(self, n: int) -> float:
        return self.mode_correlations.get(n, 0.0)

    @property
    def dominant_mode(self) -> int:
        return boundary_mode(self.kernel_rho)


def boundary_mode(rho_block: np.ndarray) -> int:
    """Dominant angular Fourier mode of a boundary perturbation."""
    spec = np.abs(np.fft.rfft(np.asarray(rho_block, dtype=float)))
    return int(np.argmax(spec))


def mode_energy_fraction(rho_block: np.ndarray, n: int) -> float:
    """Fraction (as correlation) of the signal energy in angular mode n."""
    spec = np.abs(np.fft.rfft(rho_block))**2
    total = np.sum(spec)
    if total == 0:
        return 0.0
    return math.sqrt(spec[n] / total)


def frechet_kernel_check(problem: FreeBoundaryProblem,
                         modes: tuple[int, ...] = (2, 3),
                         iterations: int = 40,
                         seed: int = 0) -> KernelMetrics:
    """Smallest singular value of the Jacobian and its kernel direction.

    Inverse power iteration on J^T J via one sparse factorization; the
    returned correlations measure the energy of the kernel's boundary
    block in each requested cos(n theta) mode.
    """
    sol = problem.solve_radial()
    J = problem.jacobian(sol.pack())
    lu = splu(J.tocsc())
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(problem.n_unknowns)
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        w = lu.solve(v, trans="T")
        w = lu.solve(w)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    sigma = np.linalg.norm(J @ v)
    rho_block = v[2 * problem.n_field:]
    corrs = {n: mode_energy_fraction(rho_block, n) for n in modes}
    return KernelMetrics(float(sigma), rho_block, corrs)


def near_zero_eigs(J, k: int = 8):
    """Eigenvalues of J with smallest magnitude, with eigenvectors.

    Partial convergence of the shift-invert iteration is tolerated:
    whatever pairs did converge are returned.
    """
    from scipy.sparse.linalg import ArpackNoConvergence
    A = J.tocsc().astype(float)
    try:
        vals, vecs = eigs(A, k=k, sigma=0.0, ncv=max(4 * k, 20), maxiter=5000)
    except ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        if len(vals) == 0:
            raise
    order = np.argsort(np.abs(vals))
    return vals[order], vecs[:, order]


def solution_to_csv(solution: FreeBoundarySolution, prefix: str,
                    comment: str = ""):
    """Write field and boundary snapshots for a converged solution."""
    from .grid import PolarGrid, boundary_to_csv, field_to_csv
    grid = PolarGrid(solution.curve, solution.R, solution.n_r)
    field_to_csv(grid, solution.m_field, f"{prefix}_m.csv", comment)
    field_to_csv(grid, solution.p_field, f"{prefix}_p.csv", comment)
    boundary_to_csv(grid, f"{prefix}_boundary.csv", comment)
