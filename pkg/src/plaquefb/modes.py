"""Mode-n linearization around the radial steady state.

Covers the mode profile Q_n(r), the bifurcation values L_n given by the
coefficient functions C1(n, rho, R) and C2(n, rho, R), the monotonicity
checks valid for rho near R, and the growth-rate dispersion relation
h(a, n, L) with its root finder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bessel import bessel_i, bessel_i_prime, bessel_k, bessel_k_prime
from .radial import ModelParams, RadialSteadyState, radial_steady_state

DEFAULT_N_MAX = 32
_NEAR_WALL_EPS_FRACTION = 0.05


class SingularModeError(ValueError):
    """The mode coefficient system is singular."""


class DegenerateBifurcationError(ValueError):
    """C2(n, rho, R) vanishes; L_n is not defined by C1/C2."""


@dataclass(frozen=True)
class ModeLinearization:
    """Coefficients of Q_n(r) = tilde_c1 I_n(z_r) + tilde_c2 K_n(z_r).

    ``shift`` is the spectral shift a added to H (zero for the steady
    linearization); ``k_ratio`` is tilde_c2 / tilde_c1.
    """

    params: ModelParams
    n: int
    tilde_c1: float
    tilde_c2: float
    k_ratio: float
    shift: float = 0.0

    @property
    def _scale(self) -> float:
        return math.sqrt((self.params.H + self.shift) / self.params.D)

    def q(self, r: float) -> float:
        z = self._scale * r
        return (self.tilde_c1 * bessel_i(self.n, z)
                + self.tilde_c2 * bessel_k(self.n, z))

    def q_prime(self, r: float) -> float:
        z = self._scale * r
        return self._scale * (self.tilde_c1 * bessel_i_prime(self.n, z)
                              + self.tilde_c2 * bessel_k_prime(self.n, z))


def mode_linearization(params: ModelParams, n: int,
                       shift: float = 0.0,
                       state: RadialSteadyState | None = None) -> ModeLinearization:
    """Solve for Q_n with Q_n(rho) = -M_s'(rho) and Q_n'(R) = -Q_n(R).

    With ``shift`` = a the Helmholtz coefficient H is replaced by H + a,
    which is the profile entering the dispersion relation.
    """
    if n < 0:
        raise ValueError("mode index must be non-negative")
    if state is None:
        state = radial_steady_state(params)
    s = math.sqrt((params.H + shift) / params.D)
    z_rho, z_R = s * params.rho, s * params.R
    # rows: Dirichlet at rho, Robin at R (d/dr = s * d/dz)
    a11, a12 = bessel_i(n, z_rho), bessel_k(n, z_rho)
    a21 = bessel_i(n, z_R) + s * bessel_i_prime(n, z_R)
    a22 = bessel_k(n, z_R) + s * bessel_k_prime(n, z_R)
    mat = np.array([[a11, a12], [a21, a22]])
    rhs = np.array([-state.m_prime(params.rho), 0.0])
    det = a11 * a22 - a12 * a21
    if det == 0.0 or not np.isfinite(det):
        raise SingularModeError(f"singular mode system for n={n}")
    c1t, c2t = np.linalg.solve(mat, rhs)
    k_ratio = -a21 / a22 if a22 != 0.0 else math.inf
    return ModeLinearization(params, n, float(c1t), float(c2t), k_ratio, shift)


@dataclass(frozen=True)
class BifurcationRecord:
    """Analytic bifurcation point L_n = c1_val / c2_val for mode n."""

    n: int
    L_n: float
    c1_val: float
    c2_val: float


def _c1_coefficient(params: ModelParams, n: int) -> float:
    rho, R = params.rho, params.R
    return (params.gamma * (n**3 - n) * (R**(2 * n) - rho**(2 * n))
            / (rho**3 * (rho**(2 * n) + R**(2 * n))))


def _c2_coefficient(params: ModelParams, n: int,
                    state: RadialSteadyState,
                    mode: ModeLinearization) -> float:
    rho, R = params.rho, params.R
    doh = params.D / params.H
    q_rho, q_R = mode.q(rho), mode.q(R)
    flux = R * state.m(R) + rho * state.m_prime(rho)
    return (-doh * 2.0 / (R**2 - rho**2) * flux
            - doh * mode.q_prime(rho)
            - doh * (2 * R**(n + 1) * rho**n * q_R
                     + n * (R**(2 * n) - rho**(2 * n)) * q_rho)
            / (rho * (rho**(2 * n) + R**(2 * n)))
            - 1.0)


def bifurcation_point(params: ModelParams, n: int,
                      state: RadialSteadyState | None = None) -> BifurcationRecord:
    """Analytic bifurcation value L_n for angular mode n."""
    if state is None:
        state = radial_steady_state(params)
    mode = mode_linearization(params, n, state=state)
    c1v = _c1_coefficient(params, n)
    c2v = _c2_coefficient(params, n, state, mode)
    if c2v == 0.0:
        raise DegenerateBifurcationError(
            f"C2({n}, rho, R) = 0; bifurcation value undefined")
    return BifurcationRecord(n, c1v / c2v, c1v, c2v)


def _harmonic_basis(n: int, r: float) -> tuple[float, float, float, float]:
    """Values and r-derivatives of the homogeneous pressure basis.

    (r^n, r^-n) for n >= 1; (ln r, 1) for n = 0.
    """
    if n == 0:
        return math.log(r), 1.0, 1.0 / r, 0.0
    return r**n, r**(-n), n * r**(n - 1), -n * r**(-n - 1)


def dispersion(a: float, n: int, params: ModelParams,
               state: RadialSteadyState | None = None) -> float:
    """Dispersion function h(a, n, L); its zeros are mode-n growth rates.

    Solves the shifted mode profile u (H replaced by H + a) and the
    associated pressure perturbation w, then returns
    L - T - a - w'(rho).  At a = 0 this reduces to C1 - C2 * L.
    """
    if a < 0:
        raise ValueError("dispersion is defined for a >= 0")
    if state is None:
        state = radial_steady_state(params)
    p = params
    u = mode_linearization(p, n, shift=a, state=state)
    beta = p.L * p.D / (p.H + a)
    b1_rho, b2_rho, db1_rho, db2_rho = _harmonic_basis(n, p.rho)
    b1_R, b2_R, db1_R, db2_R = _harmonic_basis(n, p.R)
    # w = -beta * u + c3 * b1 + c4 * b2 with w'(R) = 0 and
    # w(rho) = gamma (n^2 - 1) / rho^2; u'(R) = -u(R).
    mat = np.array([[db1_R, db2_R], [b1_rho, b2_rho]])
    rhs = np.array([-beta * u.q(p.R),
                    p.gamma * (n**2 - 1) / p.rho**2 + beta * u.q(p.rho)])
    try:
        c3, c4 = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularModeError(f"singular pressure system for n={n}") from exc
    w_prime_rho = -beta * u.q_prime(p.rho) + c3 * db1_rho + c4 * db2_rho
    return p.L - state.T - a - w_prime_rho


@dataclass(frozen=True)
class GrowthRate:
    """Real non-negative root of h(., n, L), if one exists."""

    n: int
    L: float
    a: float | None

    @property
    def unstable(self) -> bool:
        return self.a is not None and self.a > 0


def growth_rate(n: int, params: ModelParams,
                state: RadialSteadyState | None = None,
                a_start: float = 1e3, a_cap: float = 1e9) -> GrowthRate:
    """Largest-bracket positive root of the dispersion relation.

    Brackets [0, a_max] with a_max doubling from ``a_start`` until the
    sign changes; returns an absent root when h(0, n, L) <= 0 and no
    sign change is found.
    """
    if state is None:
        state = radial_steady_state(params)
    h0 = dispersion(0.0, n, params, state)
    if h0 <= 0:
        return GrowthRate(n, params.L, None)
    a_max = a_start
    while dispersion(a_max, n, params, state) > 0:
        a_max *= 2
        if a_max > a_cap:
            raise RuntimeError(
                f"no sign change of h up to a={a_cap} despite h(0) > 0")
    root = brentq(lambda a: dispersion(a, n, params, state), 0.0, a_max,
                  xtol=1e-14, rtol=8.9e-16)
    return GrowthRate(n, params.L, float(root))


@dataclass(frozen=True)
class NearWallReport:
    """Monotonicity report for C1, C2 and L_n with rho near R."""

    params: ModelParams
    n_values: tuple[int, ...]
    c1_values: tuple[float, ...]
    c2_values: tuple[float, ...]
    l_values: tuple[float, ...]
    in_regime: bool
    c2_positive: bool
    c2_decreasing: bool
    c1_increasing: bool
    l_increasing: bool

    @property
    def all_hold(self) -> bool:
        return (self.c2_positive and self.c2_decreasing
                and self.c1_increasing and self.l_increasing)


def near_wall_monotonicity(params: ModelParams, n_max: int = 8) -> NearWallReport:
    """Check C2 > 0 decreasing, C1 increasing, L_n increasing on n in [2, n_max].

    The claims are only guaranteed for rho = R - eps with eps/R <= 0.05;
    outside that regime the report still measures them.
    """
    eps = params.R - params.rho
    in_regime = eps / params.R <= _NEAR_WALL_EPS_FRACTION
    state = radial_steady_state(params)
    ns = tuple(range(2, n_max + 1))
    recs = [bifurcation_point(params, n, state) for n in ns]
    c1s = tuple(r.c1_val for r in recs)
    c2s = tuple(r.c2_val for r in recs)
    ls = tuple(r.L_n for r in recs)
    return NearWallReport(
        params=params, n_values=ns, c1_values=c1s, c2_values=c2s, l_values=ls,
        in_regime=in_regime,
        c2_positive=all(c > 0 for c in c2s),
        c2_decreasing=all(b < a for a, b in zip(c2s, c2s[1:])),
        c1_increasing=all(b > a for a, b in zip(c1s, c1s[1:])),
        l_increasing=all(b > a for a, b in zip(ls, ls[1:])),
    )
