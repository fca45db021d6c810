"""Modified Bessel functions of integer order with first derivatives.

Thin validated wrappers around scipy.special plus the derivative
recurrences I_n'(x) = (n/x) I_n(x) + I_{n+1}(x) and
K_n'(x) = (n/x) K_n(x) - K_{n+1}(x).
"""

from __future__ import annotations

import math

from scipy import special

MAX_ORDER = 64


class BesselDomainError(ValueError):
    """Argument outside the supported domain (order or x)."""


class BesselOverflowError(OverflowError):
    """Result not representable in double precision."""


def _check_order(n: int) -> int:
    if not isinstance(n, (int,)) or isinstance(n, bool):
        raise BesselDomainError(f"order must be an integer, got {n!r}")
    if n < 0 or n > MAX_ORDER:
        raise BesselDomainError(f"order must be in [0, {MAX_ORDER}], got {n}")
    return n


def bessel_i(n: int, x: float) -> float:
    """I_n(x) for x >= 0."""
    _check_order(n)
    if x < 0:
        raise BesselDomainError(f"bessel_i requires x >= 0, got {x}")
    v = float(special.iv(n, x))
    if math.isinf(v) or math.isnan(v):
        raise BesselOverflowError(f"I_{n}({x}) overflows double precision")
    return v


def bessel_k(n: int, x: float) -> float:
    """K_n(x) for x > 0."""
    _check_order(n)
    if x <= 0:
        raise BesselDomainError(f"bessel_k requires x > 0, got {x}")
    v = float(special.kv(n, x))
    if math.isinf(v) or math.isnan(v):
        raise BesselOverflowError(f"K_{n}({x}) overflows double precision")
    return v


def bessel_i_prime(n: int, x: float) -> float:
    """dI_n/dx via the recurrence (n/x) I_n + I_{n+1}."""
    _check_order(n)
    if n == 0:
        return bessel_i(1, x)
    if x <= 0:
        raise BesselDomainError(
            f"bessel_i_prime requires x > 0 for n >= 1, got x={x}")
    return (n / x) * bessel_i(n, x) + bessel_i(n + 1, x)


def bessel_k_prime(n: int, x: float) -> float:
    """dK_n/dx via the recurrence (n/x) K_n - K_{n+1}."""
    _check_order(n)
    if x <= 0:
        raise BesselDomainError(f"bessel_k_prime requires x > 0, got {x}")
    return (n / x) * bessel_k(n, x) - bessel_k(n + 1, x)
