"""Randomly switched dynamics: stationary law, ergodic averages, Lyapunov route.

When the environment flips at exponential times instead of on a clock, the
log ratio V is a piecewise deterministic Markov process confined to the
interval between the two rest points.  Its stationary density is explicit
up to a normalization constant, with an algebraic endpoint behaviour of
exponent 1/(2*T*sqrt(1+m^2)) - 1, so three independent computations of the
long-run growth exponent become available:

* :func:`delta_pdmp_quadrature` -- the density-weighted average of the
  log-product velocity, by singularity-aware quadrature;
* :func:`simulate_pdmp` -- event-driven Monte Carlo with the exact scalar
  flow between switches (no discretization bias) and batch-means errors;
* :func:`lyapunov_polar` -- the top Lyapunov exponent from the angular
  variable theta = x1/(x1+x2), integrated by RK4, worth exactly half the
  product growth exponent.

:func:`simulate_sape` drives the same event engine with near-periodic
renewal switching (uniform sojourns on [T-eta, T+eta]), and
:func:`empirical_density` produces occupation histograms for comparison
against the analytic law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import (
    Dirac,
    GrowthReport,
    MarkovSwitch,
    Method,
    RenewalSwitch,
    Trajectory,
    Uniform,
    switch_times,
)

__all__ = [
    "InvariantDensity",
    "invariant_density",
    "delta_pdmp_quadrature",
    "simulate_pdmp",
    "lyapunov_polar",
    "simulate_sape",
    "empirical_density",
    "DensityHistogram",
    "QuadratureError",
]


class QuadratureError(RuntimeError):
    """Density quadrature failed to converge to the requested tolerance."""


# ---------------------------------------------------------------------------
# Stationary density and its quadrature
#
# On the right half [0, V+], parametrized by the distance delta = V+ - v and
# with a = exp(V+), E = exp(v) = a*exp(-delta), the unnormalized two-state
# density rho~ = rho~(+) + rho~(-) factors as
#
#     rho~(delta) = delta^(theta-1) * psi(delta),   theta = 1/(2*T*sqrt(1+m^2))
#
# with psi smooth and positive.  Substituting delta = D*exp(-p/theta) turns
# the half-interval integral into (D^theta/theta) * int_0^inf e^-p psi dp,
# which a fixed Gauss-Legendre rule on p in [0, 45] handles uniformly in
# theta (the truncated tail is ~1e-20 relative).  Everything is accumulated
# in log space so extreme theta neither overflows nor underflows.


def _log_psi_hat(delta: np.ndarray, m: float, theta: float, v_plus: float) -> np.ndarray:
    """log of the smooth factor psi in rho~ = delta^(theta-1) * psi(delta).

    Valid for delta in [0, v_plus]; delta = 0 evaluates the limit.
    """
    delta = np.asarray(delta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(delta > 0.0, -np.expm1(-delta) / np.where(delta > 0, delta, 1.0), 1.0)
    log_s_over_delta = v_plus + np.log(phi)          # s = a - E = a*(1 - e^-delta)
    s = np.exp(v_plus) * (-np.expm1(-delta))
    aE_m1 = np.expm1(2.0 * v_plus - delta)           # a*E - 1
    aE_p1 = np.exp(2.0 * v_plus - delta) + 1.0       # a*E + 1
    a_p_E = np.exp(v_plus) * (1.0 + np.exp(-delta))  # a + E
    log_R = np.log(aE_m1) - np.log(aE_p1) - np.log(a_p_E)
    log_aE = 2.0 * v_plus - delta
    bracket = 1.0 / aE_p1 + s / (aE_m1 * a_p_E)
    return (
        (theta - 1.0) * log_s_over_delta
        + theta * log_R
        + log_aE
        - math.log(m)
        + np.log(bracket)
    )


def _p_panels(theta: float) -> list[tuple[float, float]]:
    edges = [0.0]
    if 45.0 * theta < 0.25:
        edges.append(max(45.0 * theta, 1e-12))
    for e in (0.25, 1.0, 4.5, 45.0):
        if e > edges[-1]:
            edges.append(e)
    return list(zip(edges[:-1], edges[1:]))


def _half_rule(
    m: float, theta: float, v_plus: float, delta_max: float, n_gl: int
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes delta_i and log-weights with sum(exp(logw)) = int_0^dmax rho~ d(delta)."""
    nodes, weights = np.polynomial.legendre.leggauss(n_gl)
    deltas = []
    logws = []
    for p0, p1 in _p_panels(theta):
        mid, half = 0.5 * (p0 + p1), 0.5 * (p1 - p0)
        p = mid + half * nodes
        with np.errstate(under="ignore"):
            d = delta_max * np.exp(-p / theta)
        deltas.append(d)
        logws.append(np.log(half * weights) - p + _log_psi_hat(d, m, theta, v_plus))
    delta_all = np.concatenate(deltas)
    logw_all = np.concatenate(logws) + theta * math.log(delta_max) - math.log(theta)
    return delta_all, logw_all


class DensityHistogram(NamedTuple):
    """Occupation histogram normalized to unit mass: density per bin."""

    edges: np.ndarray
    density: np.ndarray


@dataclass(frozen=True)
class InvariantDensity:
    """Stationary law of the log ratio under exponential switching.

    The density splits as rho = rho_plus + rho_minus over the current
    environment state and lives on (-v_plus, v_plus).  ``tail_exponent`` is
    1/(2*T*sqrt(1+m^2)) - 1: the density diverges at the interval ends when
    it is negative and ``bounded_at_endpoints`` reports that criterion.
    ``normalizer`` makes the total integrate to one (it can overflow for
    extreme parameters; internal computations stay in log space).
    """

    m: float
    T: float
    v_plus: float
    theta: float
    normalizer: float
    log_normalizer: float
    tail_exponent: float
    bounded_at_endpoints: bool
    _nodes: np.ndarray = field(repr=False)
    _logw: np.ndarray = field(repr=False)
    _logz_half: float = field(repr=False)

    def _log_parts(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log rho_near, log rho_far) at |v|: the component singular at the
        near endpoint and the one vanishing there, both unnormalized."""
        delta = self.v_plus - np.abs(v)
        theta, v_plus, m = self.theta, self.v_plus, self.m
        with np.errstate(divide="ignore", invalid="ignore"):
            log_s = v_plus + np.log(-np.expm1(-delta))
        aE_m1 = np.expm1(2.0 * v_plus - delta)
        aE_p1 = np.exp(2.0 * v_plus - delta) + 1.0
        a_p_E = np.exp(v_plus) * (1.0 + np.exp(-delta))
        log_R = np.log(aE_m1) - np.log(aE_p1) - np.log(a_p_E)
        log_aE = 2.0 * v_plus - delta
        common = theta * log_R + log_aE - math.log(m)
        with np.errstate(invalid="ignore"):
            near = (theta - 1.0) * log_s + common - np.log(aE_p1)
        if theta == 1.0:
            near = np.where(np.isneginf(log_s), common - np.log(aE_p1), near)
        far = theta * log_s + common - np.log(aE_m1) - np.log(a_p_E)
        return near, far

    def rho_parts(self, v) -> tuple[np.ndarray, np.ndarray]:
        """(rho_plus, rho_minus) at v; zero outside the support."""
        v_arr = np.asarray(v, dtype=float)
        inside = np.abs(v_arr) <= self.v_plus
        vc = np.where(inside, v_arr, 0.0)
        near, far = self._log_parts(vc)
        with np.errstate(over="ignore", under="ignore"):
            near_val = np.exp(near + self.log_normalizer)
            far_val = np.exp(far + self.log_normalizer)
        plus = np.where(v_arr >= 0.0, near_val, far_val)
        minus = np.where(v_arr >= 0.0, far_val, near_val)
        return np.where(inside, plus, 0.0)[()], np.where(inside, minus, 0.0)[()]

    def __call__(self, v):
        plus, minus = self.rho_parts(v)
        return plus + minus

    def average(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """int fn(v) rho(v) dv via the precomputed singularity-aware rule."""
        v = self.v_plus - self._nodes
        vals = np.concatenate([fn(v), fn(-v)])
        logw = np.concatenate([self._logw, self._logw])
        with np.errstate(divide="ignore"):
            log_abs = np.log(np.abs(vals))
        num, sign = logsumexp(logw + log_abs, b=np.sign(vals), return_sign=True)
        den = logsumexp(logw)
        if not np.isfinite(num):
            return 0.0
        return float(sign * np.exp(num - den))

    def _tail_mass(self, d: float) -> float:
        """Mass of the band within distance d of the endpoint +v_plus."""
        if d <= 0.0:
            return 0.0
        _, logw = _half_rule(self.m, self.theta, self.v_plus, min(d, self.v_plus), 120)
        return float(np.exp(logsumexp(logw) + self.log_normalizer))

    def cdf(self, v: float) -> float:
        """P(V <= v), endpoint-singularity aware."""
        if v <= -self.v_plus:
            return 0.0
        if v >= self.v_plus:
            return 1.0
        if v <= 0.0:
            return self._tail_mass(self.v_plus + v)  # mirror of the right tail
        return 1.0 - self._tail_mass(self.v_plus - v)

    def mass(self, lo: float, hi: float) -> float:
        """Probability of [lo, hi]."""
        if hi <= lo:
            return 0.0
        return self.cdf(hi) - self.cdf(lo)


def invariant_density(m: float, T: float, *, n_nodes: int = 160, check_tol: float = 1e-8) -> InvariantDensity:
    """Stationary density of the randomly switched log ratio.

    ``n_nodes`` is the Gauss-Legendre order per panel of the endpoint-aware
    rule; the normalization is recomputed at a lower order and a relative
    disagreement above ``check_tol`` raises :class:`QuadratureError` with
    the achieved tolerance.
    """
    if m <= 0.0 or T <= 0.0:
        raise ValueError("invariant_density needs m > 0 and T > 0")
    A = math.hypot(1.0, m)
    v_plus = math.asinh(1.0 / m)
    theta = 1.0 / (2.0 * T * A)
    nodes, logw = _half_rule(m, theta, v_plus, v_plus, n_nodes)
    logz_half = float(logsumexp(logw))
    _, logw_check = _half_rule(m, theta, v_plus, v_plus, max(24, (3 * n_nodes) // 5))
    logz_check = float(logsumexp(logw_check))
    achieved = abs(math.expm1(logz_check - logz_half))
    if not math.isfinite(logz_half) or achieved > check_tol:
        raise QuadratureError(
            f"normalization disagreement {achieved:.2e} exceeds {check_tol:.1e}"
        )
    log_norm = -(logz_half + math.log(2.0))
    with np.errstate(over="ignore"):
        norm = float(np.exp(log_norm))
    return InvariantDensity(
        m=m,
        T=T,
        v_plus=v_plus,
        theta=theta,
        normalizer=norm,
        log_normalizer=log_norm,
        tail_exponent=theta - 1.0,
        bounded_at_endpoints=bool(2.0 * T * A <= 1.0),
        _nodes=nodes,
        _logw=logw,
        _logz_half=logz_half,
    )


def delta_pdmp_quadrature(epsilon: float, m: float, T: float) -> GrowthReport:
    """Growth exponent of the product under exponential switching.

    Averages 2*(m*cosh(v) - m - epsilon) against the stationary density;
    T is the mean sojourn time (1/rate).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    dens = invariant_density(m, T)
    value = dens.average(lambda v: 2.0 * (m * np.cosh(v) - m - epsilon))
    return GrowthReport(value, Method.DENSITY_QUADRATURE)


# ---------------------------------------------------------------------------
# Event-driven Monte Carlo


def _flow_step_scalar(v0: float, sign: int, m: float, t: float, A: float) -> float:
    # scalar twin of switched.flow_exact, kept free of numpy overhead for the
    # per-switch update loop
    if sign == -1:
        return -_flow_step_scalar(-v0, 1, m, t, A)
    w0 = math.tanh(0.5 * v0)
    z0 = (w0 + m) / A
    th = math.tanh(A * t)
    if z0 <= 1.0:
        z = (th + z0) / (1.0 + th * z0)
    else:
        cth = 1.0 / th
        z = (1.0 + cth * z0) / (cth + z0)
    w = A * z - m
    return 2.0 * math.atanh(min(w, 1.0))


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _segment_u_increments(
    v_starts: np.ndarray,
    lengths: np.ndarray,
    signs: np.ndarray,
    epsilon: float,
    m: float,
    A: float,
) -> np.ndarray:
    """Exact-flow Gauss-Legendre integral of the log-product velocity over
    each constant-environment segment, vectorized across segments."""
    from .switched import flow_exact

    panel_len = 0.5 / A
    n_panels = np.maximum(1, np.ceil(lengths / panel_len).astype(int))
    seg_idx = np.repeat(np.arange(lengths.size), n_panels)
    offsets = np.concatenate([np.arange(k) for k in n_panels]).astype(float)
    h = lengths[seg_idx] / n_panels[seg_idx]
    t_nodes = (offsets[:, None] + 0.5 * (1.0 + _GL8_NODES)[None, :]) * h[:, None]
    v0 = v_starts[seg_idx]
    v_nodes = np.empty_like(t_nodes)
    for s in (1, -1):
        mask = signs[seg_idx] == s
        if np.any(mask):
            v_nodes[mask] = flow_exact(v0[mask, None], s, m, t_nodes[mask])
    g = 2.0 * (m * np.cosh(v_nodes) - m - epsilon)
    panel_int = 0.5 * h * (g @ _GL8_WEIGHTS)
    first = np.concatenate([[0], np.cumsum(n_panels)[:-1]])
    return np.add.reduceat(panel_int, first)


def _batch_ratio(
    du: np.ndarray, dt: np.ndarray, burn_frac: float = 0.05, n_batches: int = 32
) -> tuple[float, float, int]:
    """Ratio estimate sum(du)/sum(dt) with batch-means stderr.

    Burn-in covers the first ~burn_frac of total time rounded up to an even
    segment count; batches are contiguous even-length runs of segments.
    """
    cum = np.cumsum(dt)
    i0 = int(np.searchsorted(cum, burn_frac * cum[-1]))
    i0 += i0 % 2
    rem = du.size - i0
    size = rem // n_batches
    size -= size % 2
    if size < 2:
        n_batches = max(2, rem // 2)
        size = max(2, (rem // n_batches) - (rem // n_batches) % 2)
    used = n_batches * size
    starts = i0 + size * np.arange(n_batches)
    du_b = np.add.reduceat(du[i0 : i0 + used], starts - i0)
    dt_b = np.add.reduceat(dt[i0 : i0 + used], starts - i0)
    value = float(np.sum(du_b) / np.sum(dt_b))
    mu = du_b / dt_b
    w = dt_b / np.sum(dt_b)
    stderr = float(np.sqrt(np.sum(w * w * (mu - value) ** 2) * n_batches / (n_batches - 1)))
    return value, stderr, used


def _event_driven_run(
    epsilon: float, m: float, times: np.ndarray, horizon: float, seed: int
) -> tuple[Trajectory, GrowthReport]:
    if m <= 0.0:
        raise ValueError("the event-driven engine needs m > 0 (confined log ratio)")
    A = math.hypot(1.0, m)
    bounds = np.concatenate([[0.0], times, [horizon]])
    lengths = np.diff(bounds)
    keep = lengths > 0.0
    lengths = lengths[keep]
    n_seg = lengths.size
    signs = np.empty(n_seg, dtype=int)
    signs[0::2] = 1
    signs[1::2] = -1

    v_starts = np.empty(n_seg)
    v = 0.0
    for i in range(n_seg):
        v_starts[i] = v
        v = _flow_step_scalar(v, int(signs[i]), m, float(lengths[i]), A)

    du = _segment_u_increments(v_starts, lengths, signs, epsilon, m, A)
    value, stderr, used = _batch_ratio(du, lengths)
    report = GrowthReport(
        value,
        Method.MONTE_CARLO,
        stderr=stderr,
        horizon=float(horizon),
        samples=int(n_seg),
        seed=seed,
    )
    sample_t = np.concatenate([[0.0], np.cumsum(lengths)])
    sample_v = np.concatenate([v_starts, [v]])
    sample_u = np.concatenate([[0.0], np.cumsum(du)])
    traj = Trajectory(
        times=sample_t,
        states=np.column_stack([sample_u, sample_v]),
        coords="UV",
        env_trace=times,
        env_initial=1,
    )
    return traj, report


def simulate_pdmp(
    epsilon: float, m: float, rate: float, horizon: float, seed: int = 0
) -> tuple[Trajectory, GrowthReport]:
    """Monte Carlo growth exponent under exponential switching.

    Event-driven: between switches the log ratio advances by the exact
    scalar flow and the log product by per-segment Gauss-Legendre panels,
    so the only error is statistical.  The estimate is (U(horizon) -
    U(burn))/(horizon - burn) with batch-means standard error (first ~5%
    discarded, 32 even-length batches).
    """
    if rate <= 0.0:
        raise ValueError("rate must be > 0")
    if horizon < 20.0 / rate:
        raise ValueError("horizon must cover at least 20 mean sojourns (20/rate)")
    times = switch_times(MarkovSwitch(rate=rate), horizon, seed)
    return _event_driven_run(epsilon, m, times, horizon, seed)


def simulate_sape(
    epsilon: float, m: float, T: float, eta: float, horizon: float, seed: int = 0
) -> GrowthReport:
    """Growth exponent under near-periodic renewal switching.

    Sojourns are uniform on [T - eta, T + eta] (eta = 0 reproduces the
    periodic schedule exactly, switch times by multiplication); the engine
    and the estimator match :func:`simulate_pdmp`.
    """
    if not 0.0 <= eta < T:
        raise ValueError("need 0 <= eta < T")
    if horizon < 20.0 * T:
        raise ValueError("horizon must cover at least 20 mean sojourns (20*T)")
    if eta == 0.0:
        sig = RenewalSwitch(sojourn_minus=Dirac(T), sojourn_plus=Dirac(T))
    else:
        sig = RenewalSwitch(
            sojourn_minus=Uniform(T - eta, T + eta),
            sojourn_plus=Uniform(T - eta, T + eta),
        )
    times = switch_times(sig, horizon, seed)
    _, report = _event_driven_run(epsilon, m, times, horizon, seed)
    return report


def empirical_density(
    traj: Trajectory,
    m: float,
    bins: int = 100,
    *,
    dt: float = 0.25,
    burn_frac: float = 0.05,
) -> DensityHistogram:
    """Occupation-time histogram of the log ratio from an event trajectory.

    Resamples V on a uniform time grid through the exact flow between the
    stored switch points, then bins over (-v_plus, v_plus).  Needs the
    trajectory produced by :func:`simulate_pdmp` / :func:`simulate_sape`
    (switch-time samples in UV coordinates).
    """
    if traj.coords != "UV":
        raise ValueError("empirical_density needs a UV trajectory")
    from .switched import flow_exact

    t0 = burn_frac * traj.times[-1]
    grid = np.arange(t0, traj.times[-1], dt)
    if grid.size < 1e5:
        raise ValueError("need at least 1e5 resampled points; lower dt or raise horizon")
    seg = np.searchsorted(traj.times, grid, side="right") - 1
    seg = np.clip(seg, 0, traj.times.size - 2)
    offset = grid - traj.times[seg]
    v0 = traj.states[seg, 1]
    sign_of_seg = traj.env_initial * np.where(seg % 2 == 0, 1, -1)
    v_grid = np.empty_like(grid)
    for s in (1, -1):
        mask = sign_of_seg == s
        if np.any(mask):
            v_grid[mask] = flow_exact(v0[mask], s, m, offset[mask])
    v_plus = math.asinh(1.0 / m)
    counts, edges = np.histogram(v_grid, bins=bins, range=(-v_plus, v_plus))
    width = edges[1] - edges[0]
    return DensityHistogram(edges=edges, density=counts / (counts.sum() * width))


# ---------------------------------------------------------------------------
# Polar-coordinate Lyapunov exponent


def lyapunov_polar(
    epsilon: float,
    m: float,
    rate: float,
    horizon: float,
    seed: int = 0,
    *,
    n_replicas: int = 128,
    dt: float = 0.05,
) -> GrowthReport:
    """Top Lyapunov exponent from the angular variable, by RK4.

    Integrates d(theta)/dt = 2*u*theta*(1-theta) + m*(1-2*theta) together
    with the running integral of u*(2*theta - 1) - epsilon, whose time
    average is the exponent.  The total horizon is split across
    ``n_replicas`` independent replicas (one RNG stream each, spawned from
    the master seed) advanced in lockstep with switch-aligned steps; the
    stderr comes from the spread of per-replica averages.  The product
    growth exponent equals twice the returned value.
    """
    if rate <= 0.0:
        raise ValueError("rate must be > 0")
    if horizon < 20.0 / rate:
        raise ValueError("horizon must cover at least 20 mean sojourns (20/rate)")
    # keep every replica long enough for a stable per-replica average
    n_replicas = max(2, min(n_replicas, int(horizon * rate / 40.0)))
    h_rep = horizon / n_replicas
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(seed).spawn(n_replicas)]
    n_buf = int(1.5 * rate * h_rep) + 64
    sojourns = np.stack([-np.log1p(-g.random(n_buf)) / rate for g in streams])
    next_idx = np.ones(n_replicas, dtype=int)

    theta = np.full(n_replicas, 0.5)
    J = np.zeros(n_replicas)
    t = np.zeros(n_replicas)
    u = np.ones(n_replicas)
    tau = sojourns[:, 0].copy()

    burn_t = np.full(n_replicas, np.nan)
    burn_J = np.full(n_replicas, np.nan)
    end_t = np.full(n_replicas, np.nan)
    end_J = np.full(n_replicas, np.nan)
    burn_target = 0.05 * h_rep

    def rhs(th, uu):
        return 2.0 * uu * th * (1.0 - th) + m * (1.0 - 2.0 * th)

    while np.any(np.isnan(end_t)):
        h = np.minimum(dt, tau)
        k1 = rhs(theta, u)
        g1 = u * (2.0 * theta - 1.0) - epsilon
        th2 = theta + 0.5 * h * k1
        k2 = rhs(th2, u)
        g2 = u * (2.0 * th2 - 1.0) - epsilon
        th3 = theta + 0.5 * h * k2
        k3 = rhs(th3, u)
        g3 = u * (2.0 * th3 - 1.0) - epsilon
        th4 = theta + h * k3
        k4 = rhs(th4, u)
        g4 = u * (2.0 * th4 - 1.0) - epsilon
        theta = theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        J = J + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        if np.any((theta < -1e-9) | (theta > 1.0 + 1e-9)):
            raise RuntimeError("angular variable left [0, 1]; reduce dt")
        t = t + h
        tau = tau - h
        flip = tau <= 1e-12
        if np.any(flip):
            u = np.where(flip, -u, u)
            idx = next_idx[flip]
            if np.any(idx >= n_buf):
                raise RuntimeError("sojourn buffer exhausted")
            tau = np.where(flip, 0.0, tau)
            tau[flip] = sojourns[np.flatnonzero(flip), idx]
            next_idx[flip] = idx + 1
        hit_burn = np.isnan(burn_t) & (t >= burn_target)
        burn_t[hit_burn] = t[hit_burn]
        burn_J[hit_burn] = J[hit_burn]
        hit_end = np.isnan(end_t) & (t >= h_rep)
        end_t[hit_end] = t[hit_end]
        end_J[hit_end] = J[hit_end]

    span = end_t - burn_t
    mu = (end_J - burn_J) / span
    w = span / np.sum(span)
    value = float(np.sum(w * mu))
    stderr = float(
        np.sqrt(np.sum(w * w * (mu - value) ** 2) * n_replicas / (n_replicas - 1))
    )
    return GrowthReport(
        value,
        Method.MONTE_CARLO,
        stderr=stderr,
        horizon=float(horizon),
        samples=int(n_replicas),
        seed=seed,
    )
