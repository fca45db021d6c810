"""Closed-form radially symmetric steady states on the annulus [rho, R].

The macrophage density solves M'' + M'/r - (H/D) M = 0 with M(rho) = 1
and the Robin condition M'(R) = -M(R); the pressure solves
P'' + P'/r = T - L*M with P(rho) = gamma/rho and zero Neumann data at
both radii.  The clearance rate T is the unique constant compatible
with all three pressure boundary conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .bessel import bessel_i, bessel_k

_DEGENERACY_TOL = 1e-300


class SingularConfigurationError(ValueError):
    """The coefficient system for M_s is singular."""


class NoSolutionError(ValueError):
    """A requested inverse problem has no solution in the bracket."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and geometric constants of the model.

    D: macrophage diffusion coefficient, H: HDL concentration,
    L: LDL concentration, gamma: surface-tension coefficient,
    R: fixed outer radius, rho: inner free radius.
    """

    D: float
    H: float
    L: float
    gamma: float
    R: float
    rho: float

    def __post_init__(self):
        if not (self.D > 0 and self.H > 0 and self.gamma > 0):
            raise ValueError("D, H, gamma must be positive")
        if self.L < 0:
            raise ValueError("L must be non-negative")
        if not 0 < self.rho < self.R:
            raise ValueError("need 0 < rho < R")

    @property
    def z_scale(self) -> float:
        return math.sqrt(self.H / self.D)

    def z(self, r: float) -> float:
        return self.z_scale * r


def solve_radial_m(params: ModelParams) -> tuple[float, float]:
    """Coefficients (c1, c2) of M_s(r) = c1 I_0(z_r) + c2 K_0(z_r)."""
    s = params.z_scale
    zr, zrho = params.z(params.R), params.z(params.rho)
    i0_R, k0_R = bessel_i(0, zr), bessel_k(0, zr)
    i1_R, k1_R = bessel_i(1, zr), bessel_k(1, zr)
    i0_p, k0_p = bessel_i(0, zrho), bessel_k(0, zrho)
    denom = (i0_R * k0_p - i0_p * k0_R) + s * (k1_R * i0_p + i1_R * k0_p)
    if abs(denom) < _DEGENERACY_TOL:
        raise SingularConfigurationError(
            "degenerate coefficient system for the radial M equation")
    c1 = (s * k1_R - k0_R) / denom
    c2 = (s * i1_R + i0_R) / denom
    return c1, c2


def _m_value(params, c1, c2, r):
    z = params.z(r)
    return c1 * bessel_i(0, z) + c2 * bessel_k(0, z)


def _m_prime(params, c1, c2, r):
    z = params.z(r)
    return params.z_scale * (c1 * bessel_i(1, z) - c2 * bessel_k(1, z))


def clearance_t(params: ModelParams) -> float:
    """Clearance rate T = -(DL/H) * 2/(R^2 - rho^2) * (R M_s(R) + rho M_s'(rho))."""
    c1, c2 = solve_radial_m(params)
    R, rho = params.R, params.rho
    flux = R * _m_value(params, c1, c2, R) + rho * _m_prime(params, c1, c2, rho)
    return -(params.D * params.L / params.H) * 2.0 / (R**2 - rho**2) * flux


def solve_radial_p(params: ModelParams, T: float) -> tuple[float, float]:
    """Coefficients (c3, c4) of P_s(r) = -(DL/H) M_s + c3 ln r + c4 + T r^2 / 4."""
    c1, c2 = solve_radial_m(params)
    R, rho = params.R, params.rho
    beta = params.D * params.L / params.H
    c3 = beta * R**2 * rho**2 / (R**2 - rho**2) * (
        _m_prime(params, c1, c2, rho) / rho + _m_value(params, c1, c2, R) / R)
    c4 = (params.gamma / rho + beta * _m_value(params, c1, c2, rho)
          - c3 * math.log(rho) - 0.25 * T * rho**2)
    return c3, c4


@dataclass(frozen=True)
class RadialSteadyState:
    """Fully determined radially symmetric steady state."""

    params: ModelParams
    c1: float
    c2: float
    c3: float
    c4: float
    T: float

    def m(self, r: float) -> float:
        return _m_value(self.params, self.c1, self.c2, r)

    def m_prime(self, r: float) -> float:
        return _m_prime(self.params, self.c1, self.c2, r)

    def m_second(self, r: float) -> float:
        # from the ODE M'' = (H/D) M - M'/r
        p = self.params
        return (p.H / p.D) * self.m(r) - self.m_prime(r) / r

    def p(self, r: float) -> float:
        p = self.params
        beta = p.D * p.L / p.H
        return -beta * self.m(r) + self.c3 * math.log(r) + self.c4 + 0.25 * self.T * r**2

    def p_prime(self, r: float) -> float:
        p = self.params
        beta = p.D * p.L / p.H
        return -beta * self.m_prime(r) + self.c3 / r + 0.5 * self.T * r

    def p_second(self, r: float) -> float:
        p = self.params
        beta = p.D * p.L / p.H
        return -beta * self.m_second(r) - self.c3 / r**2 + 0.5 * self.T


def radial_steady_state(params: ModelParams) -> RadialSteadyState:
    c1, c2 = solve_radial_m(params)
    T = clearance_t(params)
    c3, c4 = solve_radial_p(params, T)
    return RadialSteadyState(params, c1, c2, c3, c4, T)


def eval_radial(state: RadialSteadyState, r: float):
    """(M_s, P_s, M_s', P_s', P_s'') at rho <= r <= R."""
    p = state.params
    if not (p.rho - 1e-12 <= r <= p.R + 1e-12):
        raise ValueError(f"r={r} outside [{p.rho}, {p.R}]")
    return (state.m(r), state.p(r), state.m_prime(r),
            state.p_prime(r), state.p_second(r))


def rho_from_clearance(T_target: float, D: float, H: float, L: float,
                       gamma: float, R: float) -> float:
    """Inverse of clearance_t in rho, by bracketed root finding."""
    lo, hi = 1e-3 * R, R - 1e-3 * R

    def f(rho):
        return clearance_t(ModelParams(D, H, L, gamma, R, rho)) - T_target

    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NoSolutionError(
            f"no rho in [{lo}, {hi}] attains clearance rate {T_target}")
    return brentq(f, lo, hi, xtol=1e-14)
