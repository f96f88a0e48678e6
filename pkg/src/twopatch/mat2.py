"""2x2 linear-algebra oracle: matrix exponentials, period maps, spectral radii.

The switched linear system advances over one full switching period by a
product of matrix exponentials of its constant-piece generators.  The
spectral radius of that product decides stability, and its log recovers the
growth exponent, giving an independent check on the closed-form route.

Exponentials use the exact 2x2 closed form (split off the trace, then
cosh/sinh or cos/sin of the trace-free part), so there is no step-size or
Pade error to track.  A Taylor scaling-and-squaring oracle exists only in
the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "Mat2",
    "PeriodMap",
    "ComplexSpectrumError",
    "expm2",
    "compose_map",
    "period_map",
    "phase_shift_map",
    "general_rate_map",
    "spectral_radius",
    "eigenvalues",
    "growth_rate",
    "delta_spectral",
    "switch_generator",
]


class ComplexSpectrumError(ArithmeticError):
    """Spectral radius requested for a matrix with a complex eigenvalue pair."""


@dataclass(frozen=True)
class Mat2:
    """Real 2x2 matrix with named entries."""

    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self) -> None:
        for name in ("a11", "a12", "a21", "a22"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"matrix entry {name} must be finite")

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def trace(self) -> float:
        return self.a11 + self.a22

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a11, self.a12, self.a21, self.a22)

    @staticmethod
    def identity() -> "Mat2":
        return Mat2(1.0, 0.0, 0.0, 1.0)


def expm2(M: Mat2, t: float) -> Mat2:
    """exp(t*M) in closed form.

    Writes M = mu*I + N with N trace-free; then exp(tM) is
    exp(t*mu) * (cosh(t*w) I + sinh(t*w)/w N) with w^2 = -det(N), switching to
    cos/sin when w^2 < 0 and to the t-limit when w ~ 0.  A rescaled path
    keeps cosh from overflowing before the result itself does.
    """
    if t < 0.0:
        raise ValueError("expm2 needs t >= 0")
    mu = 0.5 * (M.a11 + M.a22)
    p = 0.5 * (M.a11 - M.a22)
    q, r = M.a12, M.a21
    w2 = p * p + q * r
    if w2 > 0.0:
        w = math.sqrt(w2)
        tw = t * w
        if tw <= 350.0:
            scale = math.exp(t * mu)
            c = math.cosh(tw)
            s = math.sinh(tw) / w
        else:
            # cosh(tw) ~ e^tw/2: fold the growing exponential into the scale.
            scale = math.exp(t * (mu + w))
            d = math.exp(-2.0 * tw)
            c = 0.5 * (1.0 + d)
            s = 0.5 * (1.0 - d) / w
    elif w2 < 0.0:
        w = math.sqrt(-w2)
        scale = math.exp(t * mu)
        c = math.cos(t * w)
        s = math.sin(t * w) / w
    else:
        scale, c, s = math.exp(t * mu), 1.0, t
    if w2 != 0.0 and abs(t * t * w2) < 1e-12:
        s = t  # sinh(tw)/w and sin(tw)/w both limit to t
    return Mat2(
        scale * (c + s * p),
        scale * (s * q),
        scale * (s * r),
        scale * (c - s * p),
    )


@dataclass(frozen=True)
class PeriodMap:
    """Ordered product of exponentials advancing the state by one period.

    ``factors`` lists (generator, duration) in chronological order; the
    earliest factor acts first, so ``matrix`` is the reversed product of
    their exponentials.
    """

    matrix: Mat2
    period: float
    factors: tuple[tuple[Mat2, float], ...]

    def recompose(self) -> Mat2:
        """Recompute the product from the factors (consistency check)."""
        out = Mat2.identity()
        for gen, dur in self.factors:
            out = expm2(gen, dur) @ out
        return out


def compose_map(factors: Sequence[tuple[Mat2, float]]) -> PeriodMap:
    """Build a period map from chronological (generator, duration) factors."""
    if not factors:
        raise ValueError("need at least one factor")
    total = 0.0
    out = Mat2.identity()
    for gen, dur in factors:
        if dur < 0.0:
            raise ValueError("factor durations must be >= 0")
        out = expm2(gen, dur) @ out
        total += dur
    return PeriodMap(matrix=out, period=total, factors=tuple(factors))


def switch_generator(u: int, epsilon: float, m: float) -> Mat2:
    """Generator of the two-patch linear flow while the environment is u."""
    return Mat2(u - m - epsilon, m, m, -u - m - epsilon)


def period_map(epsilon: float, m: float, T: float) -> PeriodMap:
    """One full period 2T of the out-of-phase model: u = +1 for T, then -1 for T."""
    if T <= 0.0:
        raise ValueError("T must be > 0")
    if m < 0.0 or not 0.0 <= epsilon <= 1.0:
        raise ValueError("need m >= 0 and epsilon in [0, 1]")
    return compose_map(
        [(switch_generator(+1, epsilon, m), T), (switch_generator(-1, epsilon, m), T)]
    )


def _pair_generator(u1: int, u2: int, epsilon: float, m: float) -> Mat2:
    return Mat2(u1 - m - epsilon, m, m, u2 - m - epsilon)


def phase_shift_map(epsilon: float, m: float, T: float, phi: float) -> PeriodMap:
    """Period map when patch 2 lags patch 1 by the fraction phi of a half-period.

    Schedule over one period 2T:  (+,-) for phi*T, then (+,+) for (1-phi)*T,
    then (-,+) for phi*T, then (-,-) for (1-phi)*T.  phi = 1 reduces exactly
    to :func:`period_map` (the synchronized factors get zero duration);
    phi = 0 leaves the two patches fully synchronized.
    """
    if not 0.0 <= phi <= 1.0:
        raise ValueError("phi must lie in [0, 1]")
    return compose_map(
        [
            (_pair_generator(+1, -1, epsilon, m), phi * T),
            (_pair_generator(+1, +1, epsilon, m), (1.0 - phi) * T),
            (_pair_generator(-1, +1, epsilon, m), phi * T),
            (_pair_generator(-1, -1, epsilon, m), (1.0 - phi) * T),
        ]
    )


def general_rate_map(
    r1: float, d1: float, r2: float, d2: float, m: float, T: float
) -> PeriodMap:
    """Period map with general square-wave rates.

    Patch 1 grows at r1 then decays at d1; patch 2 decays at d2 then grows
    at r2, each phase lasting T.  r1 = r2 = 1 - eps and d1 = d2 = 1 + eps
    recovers :func:`period_map`.
    """
    g_first = Mat2(r1 - m, m, m, -d2 - m)
    g_second = Mat2(-d1 - m, m, m, r2 - m)
    return compose_map([(g_first, T), (g_second, T)])


def eigenvalues(M: Mat2, *, tol: float = 1e-10) -> tuple[float, float]:
    """Real eigenvalue pair, largest magnitude first.

    The discriminant is formed as (a11 - a22)^2 + 4*a12*a21 (cancellation-free
    for Metzler inputs) and the second root comes from the determinant, not
    from the subtractive quadratic branch.
    """
    tr = M.trace()
    det = M.det()
    disc = (M.a11 - M.a22) ** 2 + 4.0 * M.a12 * M.a21
    scale = max(tr * tr, abs(4.0 * M.a12 * M.a21), 1e-300)
    if disc < -tol * scale:
        raise ComplexSpectrumError(f"complex eigenvalue pair (discriminant {disc:g})")
    disc = max(disc, 0.0)
    root = math.sqrt(disc)
    if tr >= 0.0:
        lam1 = 0.5 * (tr + root)
    else:
        lam1 = 0.5 * (tr - root)
    lam2 = det / lam1 if lam1 != 0.0 else 0.5 * (tr + root)
    if abs(lam1) >= abs(lam2):
        return (lam1, lam2)
    return (lam2, lam1)


def spectral_radius(M: Mat2, *, tol: float = 1e-10) -> float:
    """max |eigenvalue|; raises :class:`ComplexSpectrumError` off the real case."""
    lam1, _ = eigenvalues(M, tol=tol)
    return abs(lam1)


def growth_rate(pm: PeriodMap, *, half_period_convention: bool = False) -> float:
    """Growth exponent of the norm from the period map.

    Per unit time by default: log(spectral radius) / period.  With
    ``half_period_convention`` the log is divided by period/2 instead, which
    doubles the value and matches axes that normalize by the half-period;
    for the out-of-phase model that convention equals the growth exponent of
    the product x1*x2.
    """
    denom = 0.5 * pm.period if half_period_convention else pm.period
    return math.log(spectral_radius(pm.matrix)) / denom


def delta_spectral(epsilon: float, m: float, T: float) -> float:
    """Product growth exponent via the period-map spectral radius.

    Independent of the closed form: two exponentials, one product, one
    eigenvalue.  Equals ``analytic.delta_closed`` up to roundoff.
    """
    if m == 0.0:
        return -2.0 * epsilon
    return growth_rate(period_map(epsilon, m, T), half_period_convention=True)
