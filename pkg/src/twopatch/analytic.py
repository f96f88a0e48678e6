"""Closed-form quantities of the out-of-phase two-patch model.

With growth rates +/-1 - epsilon switching every T time units and symmetric
dispersal m, the log ratio V = ln(x1/x2) obeys a scalar switched equation
whose periodic orbit is known explicitly.  This module collects everything
that can be written down in closed form:

* the rest points ``v_star`` of the two scalar fields and the zero level
  ``a_plus`` of the log-product velocity,
* the periodic-orbit amplitude ``p_plus``,
* the long-run growth exponent ``delta_closed`` of the product x1*x2, its
  limits in T and m, and
* the thresholds ``threshold_T_star`` (in T) and ``threshold_m_star`` (in m)
  where the growth exponent changes sign.

All hyperbolic expressions are rearranged in terms of exp(-T*sqrt(1+m^2))
where the naive formulas overflow or cancel, because the large-T regime is
precisely the interesting one.  Functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "NoRootError",
    "OrbitAmplitude",
    "orbit_amplitude",
    "v_star",
    "a_plus",
    "critical_migration",
    "p_plus",
    "delta_closed",
    "delta_limit_T_inf",
    "delta_limit_T_zero",
    "delta_limit_m",
    "threshold_T_star",
    "threshold_m_star",
    "MStar",
]

# Crossover in T*sqrt(1+m^2) between the direct evaluation and the
# exp(-2*T*A) rearrangement of the growth-exponent formula.
_TA_SWITCH = 30.0


class NoRootError(ValueError):
    """Requested sign change does not exist in the admissible range."""


def _validate(epsilon=None, m=None, T=None, m_positive=False) -> None:
    if epsilon is not None and not np.all((np.asarray(epsilon) >= 0.0) & (np.asarray(epsilon) <= 1.0)):
        raise ValueError("epsilon must lie in [0, 1]")
    if m is not None:
        m_arr = np.asarray(m)
        if m_positive and not np.all(m_arr > 0.0):
            raise ValueError("m must be > 0")
        if not m_positive and not np.all(m_arr >= 0.0):
            raise ValueError("m must be >= 0")
    if T is not None and not np.all(np.asarray(T) > 0.0):
        raise ValueError("T must be > 0")


def v_star(m):
    """Upper rest point of the log ratio: asinh(1/m); the lower one is its negative."""
    _validate(m=m, m_positive=True)
    return np.arcsinh(1.0 / np.asarray(m, dtype=float))[()]


def a_plus(epsilon, m):
    """Positive root of m*cosh(V) - m - epsilon: where the product stops shrinking."""
    _validate(epsilon=epsilon, m=m, m_positive=True)
    eps = np.asarray(epsilon, dtype=float)
    return np.arccosh(1.0 + eps / np.asarray(m, dtype=float))[()]


def critical_migration(epsilon):
    """Dispersal level (1 - eps^2) / (2 eps) above which growth is negative for every T."""
    eps = np.asarray(epsilon, dtype=float)
    if not np.all((eps > 0.0) & (eps <= 1.0)):
        raise ValueError("epsilon must lie in (0, 1]; no finite threshold at epsilon = 0")
    return ((1.0 - eps) * (1.0 + eps) / (2.0 * eps))[()]


def p_plus(m, T):
    """Maximum of the periodic log-ratio orbit.

    Evaluates 2*atanh(B / (A + sqrt(A^2 - B^2))) with A = sqrt(1 + m^2) and
    B = tanh(T*A).  The conjugate form avoids the A - sqrt(...) cancellation,
    and A - B is assembled from (A - 1) + (1 - B) with 1 - B computed through
    exp(-2*T*A), so the value stays accurate when T*A is large.
    """
    _validate(m=m, T=T, m_positive=True)
    m = np.asarray(m, dtype=float)
    T = np.asarray(T, dtype=float)
    A = np.hypot(1.0, m)
    e2 = np.exp(-2.0 * T * A)
    B = (1.0 - e2) / (1.0 + e2)
    a_minus_b = m * m / (A + 1.0) + 2.0 * e2 / (1.0 + e2)
    x = B / (A + np.sqrt(a_minus_b * (A + B)))
    return (2.0 * np.arctanh(x))[()]


@dataclass(frozen=True)
class OrbitAmplitude:
    """Periodic-orbit extreme with the rest point and zero-velocity level.

    ``aux`` bundles A = sqrt(1 + m^2), B = tanh(T*A) and b = exp(T*A); b
    overflows to inf for T*A > ~709 while the main fields stay finite.
    """

    p_plus: float
    v_plus: float
    a_plus: float
    A: float
    B: float
    b: float


def orbit_amplitude(epsilon: float, m: float, T: float) -> OrbitAmplitude:
    """Bundle p_plus, v_star and a_plus with the auxiliary quantities."""
    _validate(epsilon=epsilon, m=m, T=T, m_positive=True)
    A = math.hypot(1.0, m)
    return OrbitAmplitude(
        p_plus=float(p_plus(m, T)),
        v_plus=float(v_star(m)),
        a_plus=float(a_plus(epsilon, m)),
        A=A,
        B=math.tanh(T * A),
        b=math.exp(T * A) if T * A < 709.0 else math.inf,
    )


def _delta_direct(eps, m, T, A):
    # Safe while T*A is moderate: b^4 stays far from overflow.
    b2m1 = np.expm1(2.0 * T * A)
    b2 = b2m1 + 1.0
    b4 = b2 * b2
    m2 = m * m
    C = m2 * b4 + 2.0 * m2 * b2 + 4.0 * b2 + m2
    num = m2 * b4 + 2.0 * b2 + m2 + m * b2m1 * np.sqrt(C)
    den = 2.0 * (1.0 + m2) * b2
    return np.log(num / den) / T - 2.0 * (m + eps)


def _delta_tail(eps, m, T, A):
    # Factor b^4 = exp(4*T*A) out of the numerator: everything is expressed
    # through e = exp(-2*T*A) <= e^-60, and 2*(A - m) through 2/(A + m).
    e = np.exp(-2.0 * T * A)
    m2 = m * m
    num = m2 * (1.0 + e * e) + 2.0 * e + m * (1.0 - e) * np.sqrt(m2 * (1.0 + e) ** 2 + 4.0 * e)
    return np.log(num / (2.0 * (1.0 + m2))) / T + 2.0 / (A + m) - 2.0 * eps


def delta_closed(epsilon, m, T):
    """Growth exponent of the product x1*x2 in the periodic environment.

    This is the per-unit-time slope of ln(x1*x2) along the attracting
    periodic regime; positive means the coupled population grows although
    each isolated patch decays.  m = 0 returns -2*epsilon exactly (the
    formula is 0/0-adjacent there).
    """
    _validate(epsilon=epsilon, m=m, T=T)
    eps = np.asarray(epsilon, dtype=float)
    m_arr = np.asarray(m, dtype=float)
    T_arr = np.asarray(T, dtype=float)
    eps, m_arr, T_arr = np.broadcast_arrays(eps, m_arr, T_arr)
    A = np.hypot(1.0, m_arr)
    out = np.empty(eps.shape, dtype=float)

    zero = m_arr == 0.0
    direct = ~zero & (T_arr * A < _TA_SWITCH)
    tail = ~zero & ~direct
    out[zero] = -2.0 * eps[zero]
    if np.any(direct):
        out[direct] = _delta_direct(eps[direct], m_arr[direct], T_arr[direct], A[direct])
    if np.any(tail):
        out[tail] = _delta_tail(eps[tail], m_arr[tail], T_arr[tail], A[tail])
    return out[()]


def delta_limit_T_inf(epsilon, m):
    """Large-T limit of the growth exponent: 2*(sqrt(1 + m^2) - m - epsilon)."""
    _validate(epsilon=epsilon, m=m)
    m_arr = np.asarray(m, dtype=float)
    return (2.0 / (np.hypot(1.0, m_arr) + m_arr) - 2.0 * np.asarray(epsilon, dtype=float))[()]


def delta_limit_T_zero(epsilon):
    """Fast-switching limit: the two fields average and the product decays at 2*epsilon."""
    _validate(epsilon=epsilon)
    return (-2.0 * np.asarray(epsilon, dtype=float))[()]


def delta_limit_m(epsilon):
    """Both the uncoupled (m -> 0) and perfectly mixed (m -> inf) limits."""
    _validate(epsilon=epsilon)
    return (-2.0 * np.asarray(epsilon, dtype=float))[()]


def threshold_T_star(
    epsilon: float, m: float, *, t_max: float = 1e7, rtol: float = 1e-12
) -> float:
    """Half-period above which the growth exponent turns positive.

    Bracketed bisection on T (no derivatives); requires 0 < m below
    ``critical_migration(epsilon)`` so a root exists.  Raises
    :class:`NoRootError` when m is at or above the critical level, or when no
    sign change is found below ``t_max`` (the root diverges as m approaches
    the critical level).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("threshold_T_star needs 0 < epsilon < 1")
    if m <= 0.0:
        raise ValueError("threshold_T_star needs m > 0")
    if m >= critical_migration(epsilon):
        raise NoRootError(
            f"growth exponent stays negative for every T at m={m} >= "
            f"critical_migration={critical_migration(epsilon):.6g}"
        )
    lo = 1e-8
    if delta_closed(epsilon, m, lo) >= 0.0:
        raise NoRootError("no negative bracket at small T")
    hi = 1.0
    while delta_closed(epsilon, m, hi) <= 0.0:
        hi *= 2.0
        if hi > t_max:
            raise NoRootError(f"no sign change found below t_max={t_max:g}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if delta_closed(epsilon, m, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class MStar(NamedTuple):
    """Smallest dispersal with positive growth, plus its large-T predictor."""

    m_star: float
    asymptote: float


def threshold_m_star(epsilon: float, T: float, *, rtol: float = 1e-12) -> MStar:
    """Smallest positive dispersal where the growth exponent crosses zero.

    The root is exponentially small in T, so the bisection runs on ln(m)
    over [-1.5*(1 + eps)*T, ln(critical_migration)].  Also returns the
    asymptotic predictor exp(-(1 - eps)*T).  Raises :class:`NoRootError`
    when the exponent is negative on the whole bracket (T too small).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("threshold_m_star needs 0 < epsilon < 1")
    _validate(T=T)
    asymptote = math.exp(-(1.0 - epsilon) * T)
    lo = max(-1.5 * (1.0 + epsilon) * T, -300.0)
    hi = math.log(critical_migration(epsilon))
    grid = np.linspace(lo, hi, 200)
    vals = delta_closed(epsilon, np.exp(grid), T)
    positive = np.flatnonzero(vals > 0.0)
    if positive.size == 0:
        raise NoRootError(f"growth exponent negative for all m at T={T}")
    j = positive[0]
    if j == 0:
        raise NoRootError("bracket lower end is already positive; widen the bracket")
    a, b = grid[j - 1], grid[j]
    while b - a > rtol * max(1.0, abs(b)):
        mid = 0.5 * (a + b)
        if delta_closed(epsilon, math.exp(mid), T) < 0.0:
            a = mid
        else:
            b = mid
    return MStar(m_star=math.exp(0.5 * (a + b)), asymptote=asymptote)
