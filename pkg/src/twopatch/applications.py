"""Applied systems: logistic switching with persistence, and a two-patch SIR.

The density-dependent model adds a quadratic self-limitation to each patch;
its fate is decided by the linearization at the origin, so the persistence
verdict of a simulation must match the sign of the linear growth exponent.
:func:`simulate_density_dependent` integrates the system,
:func:`classify_persistence` turns a trajectory into a verdict and
:func:`predict_persistence` gives the sign-based prediction for periodic or
exponential switching.

The epidemic application couples two SIR patches by migration while social
distancing alternates on a square wave, the second patch lagging the first
by a few days.  :func:`simulate_sir` integrates the full nonlinear system
and accumulates per-patch case counts; :func:`sir_linearized_growth` gives
the early-phase growth exponent of the infected subsystem from the
four-phase period map; :func:`cumulative_cases_sweep` reproduces the
cases-versus-migration curve.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import Trajectory, env_segments
from .mat2 import Mat2, PeriodMap, compose_map, growth_rate
from .switched import StepSizeCollapseError, _integrate_patches

__all__ = [
    "Verdict",
    "PersistenceVerdict",
    "simulate_density_dependent",
    "classify_persistence",
    "predict_persistence",
    "HoltParams",
    "SirResult",
    "simulate_sir",
    "sir_linearized_map",
    "sir_linearized_growth",
    "sir_growth_crossing",
    "cumulative_cases_sweep",
]


class Verdict(enum.Enum):
    EXTINCT = "extinct"
    PERSISTENT = "persistent"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PersistenceVerdict:
    """Outcome of a long-run persistence check with its evidence."""

    verdict: Verdict
    long_run_min: float
    long_run_max: float
    horizon: float


def simulate_density_dependent(
    epsilon: float,
    alpha: float,
    m: float,
    env_realization: Sequence[tuple[float, int]],
    x0,
    horizon: float,
    dt: float,
    *,
    u0: int = 1,
) -> Trajectory:
    """Integrate the logistic switched system on two patches.

    Each patch follows dx/dt = (u(t) - epsilon)*x - alpha*x^2 (sign of u
    flipped on patch 2) plus symmetric dispersal m.  Trajectories enter the
    square [0, (1-eps)/alpha]^2 in finite time and stay there.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be > 0 (use the linear integrators otherwise)")
    switches = list(env_realization)
    if switches:
        u0 = -switches[0][1]
    segments = env_segments(switches, horizon, initial_state=u0)

    def rate(t: float, u: int) -> tuple[float, float]:
        return (u - epsilon, -u - epsilon)

    times, states, coords = _integrate_patches(
        rate, m, m, x0, segments, dt, "X", alpha=alpha
    )
    return Trajectory(
        times=times,
        states=states,
        coords=coords,
        env_trace=np.asarray([t for t, _ in switches]),
        env_initial=u0,
    )


class SweepPoint(NamedTuple):
    m: float
    verdict: Verdict
    predicted: Verdict
    delta: float


def persistence_sweep(
    epsilon: float,
    alpha: float,
    m_values: Sequence[float],
    T: float,
    horizon: float,
    dt: float = 0.05,
    *,
    x0: tuple[float, float] = (1.0, 1.0),
    extinction_threshold: float = 1e-8,
) -> list[SweepPoint]:
    """Simulated verdict versus sign prediction across a migration grid.

    All grid points share the periodic schedule, so one vectorized RK4 pass
    integrates every migration level at once; only the running extremes
    over the final half of the horizon are kept, not full trajectories.
    """
    m_arr = np.asarray(list(m_values), dtype=float)
    if np.any(m_arr < 0.0):
        raise ValueError("migration must be >= 0")
    n = m_arr.size
    state = np.tile(np.asarray(x0, dtype=float), (n, 1))
    tail_min = np.full(n, np.inf)
    tail_max = np.zeros(n)

    k_max = int(horizon // T) + 1
    bounds = np.concatenate([[0.0], T * np.arange(1, k_max + 1), [horizon]])
    bounds = np.unique(bounds[bounds <= horizon])
    t_half = 0.5 * horizon

    x1, x2 = state[:, 0].copy(), state[:, 1].copy()

    def rhs(x1, x2, u):
        d1 = (u - epsilon) * x1 - alpha * x1 * x1 + m_arr * (x2 - x1)
        d2 = (-u - epsilon) * x2 - alpha * x2 * x2 + m_arr * (x1 - x2)
        return d1, d2

    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        u = 1.0 if (t0 % (2.0 * T)) < T else -1.0
        steps = max(1, math.ceil((t1 - t0) / dt - 1e-12))
        h = (t1 - t0) / steps
        for i in range(steps):
            a1, a2 = rhs(x1, x2, u)
            b1, b2 = rhs(x1 + 0.5 * h * a1, x2 + 0.5 * h * a2, u)
            c1, c2 = rhs(x1 + 0.5 * h * b1, x2 + 0.5 * h * b2, u)
            d1, d2 = rhs(x1 + h * c1, x2 + h * c2, u)
            x1 = x1 + (h / 6.0) * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            x2 = x2 + (h / 6.0) * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            if np.any(x1 < 0.0) or np.any(x2 < 0.0):
                raise StepSizeCollapseError("negative abundance in sweep; reduce dt")
            np.maximum(x1, 1e-308, out=x1)
            np.maximum(x2, 1e-308, out=x2)
            if t0 + (i + 1) * h >= t_half:
                np.minimum(tail_min, np.minimum(x1, x2), out=tail_min)
                np.maximum(tail_max, np.maximum(x1, x2), out=tail_max)
    state = np.stack([x1, x2], axis=1)

    from .analytic import delta_closed

    out = []
    for j, m in enumerate(m_arr):
        final_max = float(np.max(state[j]))
        if final_max < extinction_threshold:
            verdict = Verdict.EXTINCT
        elif tail_min[j] >= 10.0 * extinction_threshold and math.isfinite(tail_max[j]):
            verdict = Verdict.PERSISTENT
        else:
            verdict = Verdict.INCONCLUSIVE
        d = float(delta_closed(epsilon, float(m), T))
        out.append(
            SweepPoint(
                m=float(m),
                verdict=verdict,
                predicted=Verdict.PERSISTENT if d > 0.0 else Verdict.EXTINCT,
                delta=d,
            )
        )
    return out


def classify_persistence(
    traj: Trajectory,
    extinction_threshold: float = 1e-8,
    burn_in_fraction: float = 0.5,
) -> PersistenceVerdict:
    """Partition a long-run trajectory into extinct / persistent / inconclusive.

    Extinct: every component below the threshold at the final time.
    Persistent: over the final (1 - burn_in_fraction) of the run, the
    smallest component stays at least 10x the threshold and the largest
    stays finite.  Anything else is inconclusive.
    """
    if traj.coords != "X":
        raise ValueError("persistence classification works on patch coordinates")
    t_split = burn_in_fraction * traj.times[-1]
    tail = traj.states[traj.times >= t_split]
    tail_min = float(np.min(tail))
    tail_max = float(np.max(tail))
    final_max = float(np.max(traj.states[-1]))
    if final_max < extinction_threshold:
        verdict = Verdict.EXTINCT
    elif tail_min >= 10.0 * extinction_threshold and math.isfinite(tail_max):
        verdict = Verdict.PERSISTENT
    else:
        verdict = Verdict.INCONCLUSIVE
    return PersistenceVerdict(
        verdict=verdict,
        long_run_min=tail_min,
        long_run_max=tail_max,
        horizon=float(traj.times[-1]),
    )


def predict_persistence(epsilon: float, m: float, T: float, mode: str = "periodic") -> Verdict:
    """Verdict predicted by the sign of the linear growth exponent.

    ``mode`` selects the periodic closed form or the exponential-switching
    density quadrature; the boundary value 0 maps to extinction (weak
    inequality).
    """
    from .analytic import delta_closed
    from .pdmp import delta_pdmp_quadrature

    if mode == "periodic":
        value = float(delta_closed(epsilon, m, T))
    elif mode == "markov":
        value = -2.0 * epsilon if m == 0.0 else delta_pdmp_quadrature(epsilon, m, T).value
    else:
        raise ValueError("mode must be 'periodic' or 'markov'")
    return Verdict.PERSISTENT if value > 0.0 else Verdict.EXTINCT


# ---------------------------------------------------------------------------
# Two-patch SIR with alternating social distancing


@dataclass(frozen=True)
class HoltParams:
    """Epidemic parameters (per day) with square-wave distancing.

    ``beta_n``/``beta_s`` are transmission rates already scaled by the patch
    population (beta*N), so the model runs per capita with N = 1; ``mu`` is
    the removal rate on top of recovery.  Patch 2 applies the same schedule
    ``phase_shift`` days later.
    """

    beta_n: float = 0.1988
    gamma_n: float = 0.098
    mu: float = 0.002
    beta_s: float = 0.0288
    gamma_s: float = 0.128
    T: float = 30.0
    phase_shift: float = 4.0
    m: float = 0.0

    def __post_init__(self) -> None:
        if self.T <= 0.0:
            raise ValueError("T must be > 0")
        if not 0.0 <= self.phase_shift < 2.0 * self.T:
            raise ValueError("phase_shift must lie in [0, 2T)")
        if self.m < 0.0:
            raise ValueError("m must be >= 0")

    @property
    def net_normal(self) -> float:
        return self.beta_n - self.gamma_n - self.mu

    @property
    def net_distanced(self) -> float:
        return self.beta_s - self.gamma_s - self.mu


class SirResult(NamedTuple):
    trajectory: Trajectory
    cumulative_cases: tuple[float, float]
    cumulative_removals: tuple[float, float]


def _sir_breakpoints(holt: HoltParams, horizon: float) -> np.ndarray:
    k_max = int(horizon // holt.T) + 2
    base = holt.T * np.arange(1, k_max + 1)
    lagged = base + holt.phase_shift - holt.T
    pts = np.concatenate([[0.0], base, lagged, [horizon]])
    pts = np.unique(pts[(pts >= 0.0) & (pts <= horizon)])
    return pts


def _phase_is_normal(t: float, T: float) -> bool:
    return (t % (2.0 * T)) < T


def simulate_sir(
    holt: HoltParams,
    m: float | None = None,
    horizon_days: float = 1500.0,
    dt: float = 0.05,
    x0: tuple[float, float, float, float] | None = None,
) -> SirResult:
    """Integrate the coupled SIR pair and accumulate per-patch cases.

    Initial conditions default to S = 1 per patch with a 1e-5 seed of
    infection in patch 1 only.  Cases are int beta(.)*S_i*I_i dt and
    removals int (gamma(.) + mu)*I_i dt, both carried as extra RK4 states so
    they share the integrator's accuracy.
    """
    m_val = holt.m if m is None else m
    if m_val < 0.0:
        raise ValueError("m must be >= 0")
    if x0 is None:
        x0 = (1.0, 1e-5, 1.0, 0.0)
    if any(c < 0.0 for c in x0):
        raise ValueError("S and I must start >= 0")
    state = np.array(list(x0) + [0.0, 0.0, 0.0, 0.0])

    pts = _sir_breakpoints(holt, horizon_days)

    def rates_at(t: float) -> tuple[float, float, float, float]:
        n1 = _phase_is_normal(t, holt.T)
        n2 = _phase_is_normal(t - holt.phase_shift, holt.T)
        b1, g1 = (holt.beta_n, holt.gamma_n) if n1 else (holt.beta_s, holt.gamma_s)
        b2, g2 = (holt.beta_n, holt.gamma_n) if n2 else (holt.beta_s, holt.gamma_s)
        return b1, g1, b2, g2

    def rhs(t: float, y: np.ndarray, rates) -> np.ndarray:
        b1, g1, b2, g2 = rates
        S1, I1, S2, I2 = y[0], y[1], y[2], y[3]
        new1 = b1 * S1 * I1
        new2 = b2 * S2 * I2
        return np.array(
            [
                -new1 + m_val * (S2 - S1),
                new1 - (g1 + holt.mu) * I1 + m_val * (I2 - I1),
                -new2 + m_val * (S1 - S2),
                new2 - (g2 + holt.mu) * I2 + m_val * (I1 - I2),
                new1,
                new2,
                (g1 + holt.mu) * I1,
                (g2 + holt.mu) * I2,
            ]
        )

    times = [0.0]
    samples = [state[:4].copy()]
    for t0, t1 in zip(pts[:-1], pts[1:]):
        rates = rates_at(0.5 * (t0 + t1))
        n = max(1, math.ceil((t1 - t0) / dt - 1e-12))
        h = (t1 - t0) / n
        for i in range(n):
            t = t0 + i * (t1 - t0) / n
            k1 = rhs(t, state, rates)
            k2 = rhs(t + 0.5 * h, state + 0.5 * h * k1, rates)
            k3 = rhs(t + 0.5 * h, state + 0.5 * h * k2, rates)
            k4 = rhs(t + h, state + h * k3, rates)
            state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if np.any(state[:4] < -1e-12):
                raise StepSizeCollapseError("SIR state went negative; reduce dt")
            state[:4] = np.maximum(state[:4], 0.0)
            times.append(t0 + (i + 1) * (t1 - t0) / n)
            samples.append(state[:4].copy())

    traj = Trajectory(
        times=np.asarray(times),
        states=np.maximum(np.asarray(samples), 1e-308),
        coords="SIR",
        env_trace=pts[(pts > 0) & (pts < horizon_days)],
        env_initial=1,
    )
    return SirResult(
        trajectory=traj,
        cumulative_cases=(float(state[4]), float(state[5])),
        cumulative_removals=(float(state[6]), float(state[7])),
    )


def sir_linearized_map(holt: HoltParams, m: float) -> PeriodMap:
    """Four-phase period map of the early-epidemic infected subsystem.

    Over one period 2T the pair (I1, I2) sees (normal, distanced) for
    ``phase_shift`` days, both normal, (distanced, normal), then both
    distanced; the generators use the net rates beta*N - gamma - mu.
    """
    a_n, a_s = holt.net_normal, holt.net_distanced
    phi = holt.phase_shift

    def gen(a1: float, a2: float) -> Mat2:
        return Mat2(a1 - m, m, m, a2 - m)

    return compose_map(
        [
            (gen(a_n, a_s), phi),
            (gen(a_n, a_n), holt.T - phi),
            (gen(a_s, a_n), phi),
            (gen(a_s, a_s), holt.T - phi),
        ]
    )


def sir_linearized_growth(holt: HoltParams, m: float) -> float:
    """Early-phase growth exponent per day of the infected pair."""
    return growth_rate(sir_linearized_map(holt, m))


def sir_growth_crossing(holt: HoltParams, lo: float = 0.05, hi: float = 1.0) -> float:
    """Upper migration level where the linearized growth exponent turns negative.

    ``lo`` must sit inside the unstable window (growth positive) and ``hi``
    beyond it; the growth-versus-migration curve is hump-shaped, negative
    both for very small and for large migration.
    """
    f_lo, f_hi = sir_linearized_growth(holt, lo), sir_linearized_growth(holt, hi)
    if f_lo <= 0.0 or f_hi >= 0.0:
        raise ValueError("no sign change in [lo, hi]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sir_linearized_growth(holt, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cumulative_cases_sweep(
    holt: HoltParams,
    m_grid: Sequence[float],
    horizon_days: float = 1500.0,
    dt: float = 0.1,
) -> list[tuple[float, float]]:
    """Total cases after ``horizon_days`` for each migration level.

    All grid points share the same switching schedule, so the RK4 loop runs
    vectorized across the grid.
    """
    m_arr = np.asarray(list(m_grid), dtype=float)
    if m_arr.size == 0:
        raise ValueError("m_grid must be nonempty")
    if np.any(m_arr < 0.0):
        raise ValueError("migration must be >= 0")
    n = m_arr.size
    state = np.zeros((n, 6))
    state[:, 0] = 1.0
    state[:, 1] = 1e-5
    state[:, 2] = 1.0

    pts = _sir_breakpoints(holt, horizon_days)

    def rhs(y: np.ndarray, rates) -> np.ndarray:
        b1, g1, b2, g2 = rates
        S1, I1, S2, I2 = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
        new1 = b1 * S1 * I1
        new2 = b2 * S2 * I2
        return np.stack(
            [
                -new1 + m_arr * (S2 - S1),
                new1 - (g1 + holt.mu) * I1 + m_arr * (I2 - I1),
                -new2 + m_arr * (S1 - S2),
                new2 - (g2 + holt.mu) * I2 + m_arr * (I1 - I2),
                new1,
                new2,
            ],
            axis=1,
        )

    for t0, t1 in zip(pts[:-1], pts[1:]):
        n1 = _phase_is_normal(0.5 * (t0 + t1), holt.T)
        n2 = _phase_is_normal(0.5 * (t0 + t1) - holt.phase_shift, holt.T)
        b1, g1 = (holt.beta_n, holt.gamma_n) if n1 else (holt.beta_s, holt.gamma_s)
        b2, g2 = (holt.beta_n, holt.gamma_n) if n2 else (holt.beta_s, holt.gamma_s)
        rates = (b1, g1, b2, g2)
        steps = max(1, math.ceil((t1 - t0) / dt - 1e-12))
        h = (t1 - t0) / steps
        for _ in range(steps):
            k1 = rhs(state, rates)
            k2 = rhs(state + 0.5 * h * k1, rates)
            k3 = rhs(state + 0.5 * h * k2, rates)
            k4 = rhs(state + h * k3, rates)
            state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            state[:, :4] = np.maximum(state[:, :4], 0.0)

    totals = state[:, 4] + state[:, 5]
    return [(float(m), float(c)) for m, c in zip(m_arr, totals)]
