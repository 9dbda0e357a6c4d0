"""Gamma-family special functions used by the cosmological model.

Implements the unregularized lower incomplete gamma

    lig(a, x) = integral_0^x t^(a-1) e^(-t) dt,  a > 0, x >= 0,

with the usual stable split: a power series for x < a + 1 and a Lentz
continued fraction for the upper tail otherwise.  Both branches work on the
regularized ratio and multiply by Gamma(a) at the end, so intermediate
quantities stay in a tame range.
"""

from __future__ import annotations

import math

__all__ = ["lower_incomplete_gamma", "gamma_fn"]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 1000


def gamma_fn(a: float) -> float:
    """Complete gamma function for a > 0."""
    a = float(a)
    if not math.isfinite(a) or a <= 0.0:
        raise ValueError(f"gamma_fn requires finite a > 0, got {a}")
    return math.gamma(a)


def _series_p(a: float, x: float) -> float:
    # Regularized P(a, x) by the ascending series, valid for x < a + 1.
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise RuntimeError(f"incomplete gamma series failed to converge (a={a}, x={x})")


def _contfrac_q(a: float, x: float) -> float:
    # Regularized Q(a, x) by the continued fraction (modified Lentz), for
    # x >= a + 1 where it converges quickly.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise RuntimeError(
        f"incomplete gamma continued fraction failed to converge (a={a}, x={x})"
    )


def lower_incomplete_gamma(a: float, x: float) -> float:
    """Unregularized lower incomplete gamma function lig(a, x).

    Monotone nondecreasing in x, with lig(a, 0) = 0 and
    lig(a, x) -> Gamma(a) as x -> infinity.
    """
    a = float(a)
    x = float(x)
    if not math.isfinite(a) or a <= 0.0:
        raise ValueError(f"lower_incomplete_gamma requires finite a > 0, got a={a}")
    if not math.isfinite(x) or x < 0.0:
        if x == math.inf:
            return gamma_fn(a)
        raise ValueError(f"lower_incomplete_gamma requires finite x >= 0, got x={x}")
    if x == 0.0:
        return 0.0
    g = gamma_fn(a)
    if x < a + 1.0:
        return _series_p(a, x) * g
    return (1.0 - _contfrac_q(a, x)) * g


def lig_series_batch(a: float, x):
    """Vectorized lig(a, x) for an array x with every element below a + 1.

    Same ascending series as the scalar path, iterated until all elements
    converge; used where one shape parameter meets many small arguments.
    """
    import numpy as np

    a = float(a)
    if not math.isfinite(a) or a <= 0.0:
        raise ValueError(f"lig_series_batch requires finite a > 0, got a={a}")
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0):
        raise ValueError("lig_series_batch requires finite x >= 0")
    if np.any(x >= a + 1.0):
        raise ValueError("lig_series_batch only covers the series branch x < a + 1")
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term = term * (x / n)
        total += term
        if np.all(np.abs(term) < np.abs(total) * _EPS):
            break
    else:
        raise RuntimeError("incomplete gamma batch series failed to converge")
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = (
        total[nz]
        * np.exp(-x[nz] + a * np.log(x[nz]) - math.lgamma(a))
        * math.gamma(a)
    )
    return out
