"""Finite-difference discretization on the perturbed annulus.

Per-ray uniform radial grids between the free boundary rho(theta_j) and
the fixed circle r = R, second-order central differences in r, a
nine-point stencil for the angular second derivative that stays
second-order on ray-dependent radii, and curvature of the discrete
free boundary.

Node ordering is ray-major: index = j * (n_r + 1) + i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


class InvalidGeometryError(ValueError):
    """Free boundary touches or crosses the fixed outer circle."""


@dataclass(frozen=True)
class BoundaryCurve:
    """Periodic free boundary rho(theta_j) sampled on the angular grid."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or len(vals) < 8 or len(vals) % 2:
            raise ValueError("boundary curve needs an even number >= 8 of samples")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("boundary radii must be positive and finite")

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.m) * (2 * np.pi / self.m)

    @classmethod
    def circle(cls, rho: float, m: int) -> "BoundaryCurve":
        return cls(np.full(m, float(rho)))

    @classmethod
    def cosine(cls, rho0: float, eps: float, n: int, m: int) -> "BoundaryCurve":
        th = np.arange(m) * (2 * np.pi / m)
        return cls(rho0 + eps * np.cos(n * th))


def periodic_deriv(values: np.ndarray, dtheta: float) -> np.ndarray:
    """Fourth-order central first derivative of periodic samples."""
    v = np.asarray(values, dtype=float)
    return (-np.roll(v, -2) + 8 * np.roll(v, -1)
            - 8 * np.roll(v, 1) + np.roll(v, 2)) / (12 * dtheta)


def periodic_second_deriv(values: np.ndarray, dtheta: float) -> np.ndarray:
    """Fourth-order central second derivative of periodic samples."""
    v = np.asarray(values, dtype=float)
    return (-np.roll(v, -2) + 16 * np.roll(v, -1) - 30 * v
            + 16 * np.roll(v, 1) - np.roll(v, 2)) / (12 * dtheta**2)


def curvature_of(rho: np.ndarray, dtheta: float) -> np.ndarray:
    """Curvature of r = rho(theta) from the samples."""
    rt = periodic_deriv(rho, dtheta)
    rtt = periodic_second_deriv(rho, dtheta)
    return (2 * rt**2 - rho * rtt + rho**2) / (rt**2 + rho**2) ** 1.5


def curvature(curve: BoundaryCurve) -> np.ndarray:
    """Per-node curvature of the discrete free boundary."""
    return curvature_of(curve.values, 2 * np.pi / curve.m)


class PolarGrid:
    """Body-fitted polar grid: r_{i,j} = rho_j + i h_j with h_j = (R - rho_j)/n_r."""

    def __init__(self, curve: BoundaryCurve, R: float, n_r: int):
        if n_r < 2:
            # 2 is the floor for the one-sided 3-point boundary rows
            raise ValueError("need n_r >= 2")
        if np.any(curve.values >= R):
            raise InvalidGeometryError("free boundary must stay inside r = R")
        self.curve = curve
        self.R = float(R)
        self.n_r = int(n_r)
        self.m = curve.m
        self.dtheta = 2 * np.pi / self.m
        self.theta = curve.theta
        self.rho = curve.values
        self.h = (R - self.rho) / n_r
        # radii, shape (m, n_r + 1), ray-major
        self.r = self.rho[:, None] + np.arange(n_r + 1)[None, :] * self.h[:, None]

    @property
    def n_nodes(self) -> int:
        return self.m * (self.n_r + 1)

    def node(self, i: int, j: int) -> int:
        return (j % self.m) * (self.n_r + 1) + i


def build_grid(curve: BoundaryCurve, R: float, n_r: int) -> PolarGrid:
    return PolarGrid(curve, R, n_r)


def stencil_from_arrays(r: np.ndarray, h: np.ndarray):
    """Angular stencil coefficients from raw radius/spacing arrays.

    ``r`` has shape (m, n_r+1) and ``h`` shape (m,).  Returns the nine
    coefficient arrays (a1..a9), each shaped like ``r``.
    """
    dp = r - np.roll(r, -1, axis=0)       # r_{i,j} - r_{i,j+1}
    dm = r - np.roll(r, 1, axis=0)        # r_{i,j} - r_{i,j-1}
    hp = np.roll(h, -1)[:, None]
    hm = np.roll(h, 1)[:, None]
    a5 = dp / (2 * hp) + dp**2 / (2 * hp**2)
    a6 = -dp / (2 * hp) + dp**2 / (2 * hp**2)
    a4 = 1.0 - a5 - a6
    a8 = dm / (2 * hm) + dm**2 / (2 * hm**2)
    a9 = -dm / (2 * hm) + dm**2 / (2 * hm**2)
    a7 = 1.0 - a8 - a9
    zeros = np.zeros_like(a4)
    a1 = np.full_like(a4, -2.0)
    return a1, zeros, zeros, a4, a5, a6, a7, a8, a9


def theta_stencil_arrays(grid: PolarGrid):
    """Nine coefficient arrays (a1..a9) of the angular stencil, shape (m, n_r+1).

    The scheme interpolates each neighbouring ray quadratically to the
    centre radius before the angular central difference, so it reduces
    exactly to (1, -2, 1) on a radially symmetric grid.  The weighted
    sum divided by dtheta^2 approximates d^2 G / d theta^2 to second
    order.
    """
    return stencil_from_arrays(grid.r, grid.h)


def theta_stencil(grid: PolarGrid, i: int, j: int) -> np.ndarray:
    """Coefficients (a1..a9) at interior node (i, j)."""
    if not 1 <= i <= grid.n_r - 1:
        raise ValueError("theta stencil is defined at interior radial indices")
    arrays = theta_stencil_arrays(grid)
    return np.array([a[j, i] for a in arrays])


def apply_theta_second(grid: PolarGrid, values: np.ndarray) -> np.ndarray:
    """d^2/dtheta^2 of nodal values (m, n_r+1) at interior radial nodes.

    Returns an (m, n_r+1) array; entries at i = 0 and i = n_r are zero.
    """
    a1, _, _, a4, a5, a6, a7, a8, a9 = theta_stencil_arrays(grid)
    vp = np.roll(values, -1, axis=0)
    vm = np.roll(values, 1, axis=0)
    out = np.zeros_like(values)
    sl = np.s_[:, 1:-1]
    out[sl] = (a1[sl] * values[sl]
               + a4[sl] * vp[sl] + a5[sl] * vp[:, 2:] + a6[sl] * vp[:, :-2]
               + a7[sl] * vm[sl] + a8[sl] * vm[:, 2:] + a9[sl] * vm[:, :-2])
    return out / grid.dtheta**2


def apply_laplacian(grid: PolarGrid, values: np.ndarray) -> np.ndarray:
    """Discrete polar Laplacian at interior nodes of an (m, n_r+1) field."""
    h = grid.h[:, None]
    out = np.zeros_like(values)
    sl = np.s_[:, 1:-1]
    d_rr = (values[:, 2:] - 2 * values[sl] + values[:, :-2]) / h**2
    d_r = (values[:, 2:] - values[:, :-2]) / (2 * h)
    r_in = grid.r[sl]
    out[sl] = d_rr + d_r / r_in
    out += apply_theta_second(grid, values) / grid.r**2
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


def _laplacian_coo(grid: PolarGrid):
    """COO triplets of the interior Laplacian rows."""
    m, n_r = grid.m, grid.n_r
    a1, _, _, a4, a5, a6, a7, a8, a9 = theta_stencil_arrays(grid)
    rows, cols, vals = [], [], []
    jj, ii = np.meshgrid(np.arange(m), np.arange(1, n_r), indexing="ij")
    jj, ii = jj.ravel(), ii.ravel()
    row = jj * (n_r + 1) + ii
    h = grid.h[jj]
    r = grid.r[jj, ii]
    inv_t = 1.0 / (r**2 * grid.dtheta**2)
    jp, jm = (jj + 1) % m, (jj - 1) % m

    def add(j_idx, i_off, coeff):
        rows.append(row)
        cols.append(j_idx * (n_r + 1) + ii + i_off)
        vals.append(coeff)

    add(jj, 0, -2.0 / h**2 + a1[jj, ii] * inv_t)
    add(jj, 1, 1.0 / h**2 + 1.0 / (2 * h * r))
    add(jj, -1, 1.0 / h**2 - 1.0 / (2 * h * r))
    add(jp, 0, a4[jj, ii] * inv_t)
    add(jp, 1, a5[jj, ii] * inv_t)
    add(jp, -1, a6[jj, ii] * inv_t)
    add(jm, 0, a7[jj, ii] * inv_t)
    add(jm, 1, a8[jj, ii] * inv_t)
    add(jm, -1, a9[jj, ii] * inv_t)
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
            row)


def assemble_operator(grid: PolarGrid, params, field: str,
                      m_values: np.ndarray | None = None,
                      T: float | None = None):
    """Sparse system (A, b) for one scalar field on a fixed grid.

    field = "M": D Lap M - H M = 0 with M = 1 on the free boundary and
    the Robin condition at r = R.  field = "P": Lap P = T - L M with
    P = gamma kappa on the free boundary and zero Neumann at r = R;
    ``m_values`` (m, n_r+1) and ``T`` are then required.
    """
    if field not in ("M", "P"):
        raise ValueError("field must be 'M' or 'P'")
    m, n_r = grid.m, grid.n_r
    n = grid.n_nodes
    rows, cols, vals, int_rows = _laplacian_coo(grid)
    b = np.zeros(n)
    if field == "M":
        vals = params.D * vals
        # -H M on interior rows
        rows = np.concatenate([rows, int_rows])
        cols = np.concatenate([cols, int_rows])
        vals = np.concatenate([vals, np.full(len(int_rows), -params.H)])
    else:
        if m_values is None or T is None:
            raise ValueError("P assembly needs m_values and T")
        jj = int_rows // (n_r + 1)
        ii = int_rows % (n_r + 1)
        b[int_rows] = T - params.L * m_values[jj, ii]

    j_arr = np.arange(m)
    # Dirichlet rows at the free boundary (i = 0)
    dir_rows = j_arr * (n_r + 1)
    rows = np.concatenate([rows, dir_rows])
    cols = np.concatenate([cols, dir_rows])
    vals = np.concatenate([vals, np.ones(m)])
    if field == "M":
        b[dir_rows] = 1.0
    else:
        b[dir_rows] = params.gamma * curvature(grid.curve)

    # PDE rows at r = R with a ghost node eliminated through the
    # central-differenced boundary condition (second order, clean
    # asymptotic constant even on the coarsest ladder grids)
    alpha = 1.0 if field == "M" else 0.0
    out_rows = j_arr * (n_r + 1) + n_r
    h, R, dth = grid.h, grid.R, grid.dtheta
    scale = params.D if field == "M" else 1.0
    center = scale * (-2.0 / h**2 - 2.0 * alpha / h - alpha / R
                      - 2.0 / (R**2 * dth**2))
    if field == "M":
        center = center - params.H
    inward = scale * 2.0 / h**2
    across = scale / (R**2 * dth**2) * np.ones(m)
    jp = ((j_arr + 1) % m) * (n_r + 1) + n_r
    jm = ((j_arr - 1) % m) * (n_r + 1) + n_r
    rows = np.concatenate([rows, out_rows, out_rows, out_rows, out_rows])
    cols = np.concatenate([cols, out_rows, out_rows - 1, jp, jm])
    vals = np.concatenate([vals, center, inward, across, across])
    if field == "P":
        b[out_rows] = T - params.L * m_values[:, n_r]

    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, b


def solve_field(grid: PolarGrid, params, field: str,
                m_values: np.ndarray | None = None,
                T: float | None = None) -> np.ndarray:
    """Direct sparse solve of one field; returns shape (m, n_r+1)."""
    A, b = assemble_operator(grid, params, field, m_values, T)
    x = sparse.linalg.spsolve(A.tocsc(), b)
    return x.reshape(grid.m, grid.n_r + 1)


def field_to_csv(grid: PolarGrid, values: np.ndarray, path, comment: str = ""):
    """Write a field snapshot as CSV rows i,j,r,theta,value."""
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write("i,j,r,theta,value\n")
        for j in range(grid.m):
            for i in range(grid.n_r + 1):
                f.write(f"{i},{j},{grid.r[j, i]:.17g},"
                        f"{grid.theta[j]:.17g},{values[j, i]:.17g}\n")


def boundary_to_csv(grid: PolarGrid, path, comment: str = ""):
    """Write the free boundary as CSV rows j,theta,rho."""
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write("j,theta,rho\n")
        for j in range(grid.m):
            f.write(f"{j},{grid.theta[j]:.17g},{grid.rho[j]:.17g}\n")
